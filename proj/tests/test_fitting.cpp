#include <gtest/gtest.h>

#include <cmath>

#include "rnnlab/fitting.hpp"

using namespace rnnlab;

namespace {

// Plain Monte Carlo of E[1[<a, x*> + n >= 0] H(a)] with a ~ N(0, I_4),
// n ~ N(0, sigma^2), x* = (c t-direction..., 1/2).
struct McResult {
  double mean, se;
};

McResult indicator_expectation(const FitFunction& H, double t, double sigma, long samples, RngStream& rng) {
  // w* = e_0; x* = (t, sqrt(3/4 - t^2), 0, 1/2)
  Vector wstar = Vector::Zero(4);
  wstar[0] = 1.0;
  Vector xstar(4);
  xstar << t, std::sqrt(0.75 - t * t), 0.0, 0.5;
  double s = 0, s2 = 0;
  for (long k = 0; k < samples; ++k) {
    const Vector a = gaussian_vector(4, 1.0, rng);
    const double n = sigma * rng.normal();
    const double v = a.dot(xstar) + n >= 0 ? H.raw(a.dot(wstar), a[3]) : 0.0;
    s += v;
    s2 += v * v;
  }
  const double mean = s / samples;
  return {mean, std::sqrt((s2 / samples - mean * mean) / samples)};
}

}  // namespace

TEST(CalibrateFit, IndicatorExpectationReproducesTargetMonteCarlo) {
  RngStream rng(1, 1);
  for (const auto& phi : {TaylorSeries::monomial(1), TaylorSeries({0.0, 0.3, -0.2})}) {
    const FitFunction H = fit_indicator_function(phi, 1.0, 0.2);
    for (double t : {-0.6, 0.0, 0.5}) {
      const auto mc = indicator_expectation(H, t, 1.0, 400000, rng);
      EXPECT_NEAR(mc.mean, phi(t), 5 * mc.se + 1e-3) << "t=" << t;
    }
  }
}

TEST(CalibrateFit, QuadratureExpectationWithinResidual) {
  const TaylorSeries phi({0.0, 0.5, 0.0, -0.1});
  const FitFunction H = fit_indicator_function(phi, 0.7, 0.1);
  EXPECT_LE(H.max_residual, 0.05);
  for (double t = -0.85; t <= 0.85; t += 0.17) EXPECT_NEAR(H.on_target(t), phi(t), 1e-8);
  EXPECT_EQ(H.residuals.size(), H.residual_t.size());
}

TEST(CalibrateFit, LargerNoiseScalesMonomialsDown) {
  // Raising the noise by gamma shrinks the degree-i part by kappa/kappa_gamma
  // to the i-th power; for z that is a single ratio.
  const FitFunction H = fit_indicator_function(TaylorSeries::monomial(1), 1.0, 0.2);
  const double r = H.off_target(0.5, 2.0) / H.on_target(0.5);
  EXPECT_GT(r, 0.0);
  EXPECT_LT(r, 1.0);
}

TEST(CalibrateFit, ClampIsRespected) {
  const FitFunction H = fit_indicator_function(TaylorSeries::monomial(2), 1.0, 0.2);
  for (double z : {-8.0, -1.0, 0.0, 3.0, 9.0}) {
    for (double b : {-6.0, 0.0, 6.0}) EXPECT_LE(std::abs(H(z, b)), H.clamp);
  }
}

TEST(CalibrateFit, TightClampFailsTheResidualCheck) {
  FitOptions opts;
  opts.clamp = 1e-3;
  try {
    fit_indicator_function(TaylorSeries::monomial(1), 1.0, 0.2, opts);
    FAIL() << "expected CalibrationError";
  } catch (const CalibrationError& e) {
    EXPECT_FALSE(e.residuals().empty());
  }
  opts.check_residual = false;
  EXPECT_NO_THROW(fit_indicator_function(TaylorSeries::monomial(1), 1.0, 0.2, opts));
}

TEST(CalibrateFit, ZeroSeriesAndErrors) {
  const FitFunction H = fit_indicator_function(TaylorSeries::zero(), 1.0, 0.2);
  EXPECT_EQ(H(0.3, -0.2), 0.0);
  EXPECT_THROW(fit_indicator_function(TaylorSeries::monomial(1), 0.05, 0.2), std::invalid_argument);
  EXPECT_THROW(fit_indicator_function(TaylorSeries::monomial(1), 1.0, 1.5), std::invalid_argument);
}

TEST(CalibrateFit, WindowNoiseStillReproducesTarget) {
  NoiseModel noise;
  noise.sigma = 0.5;
  noise.window_half_width = 0.3;
  noise.window_scale = 0.5;
  const FitFunction H = calibrate_fit(TaylorSeries::monomial(1), noise, 0.2);
  for (double t : {-0.5, 0.2, 0.8}) EXPECT_NEAR(H.on_target(t), t, 1e-8);
}

TEST(Existence, ErrorShrinksWithWidth) {
  // L = 4, p = 1, Phi(z) = z: median error over a few seeds at two widths.
  // The indicator window is widened; at the default width no row lands in it
  // at these m and W* is identically zero.
  auto median_error = [](int m) {
    std::vector<double> errs;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      RngStream rng(seed, 0);
      const auto F = random_target(4, 4, 2, 1, TaylorSeries::monomial(1), rng);
      const auto params = init_random(Dims{m, 4, 2, 4}, rng);
      const auto null_trace = forward(params, null_sequence(4, 4, 0.25));
      WStarOptions opts;
      opts.eps_c = 2.0;
      const auto wsb = build_w_star(params, F, null_trace, 0.1, 0.25, rng, opts);
      const auto xstar = sample_true_sequence(4, 4, TokenDistribution{}, rng);
      errs.push_back(existence_error(params, wsb, F, xstar));
    }
    return median(errs);
  };
  EXPECT_LT(median_error(4096), median_error(256));
}

TEST(Existence, WStarHasLowRankStructure) {
  RngStream rng(4, 0);
  const auto F = random_target(5, 3, 1, 1, TaylorSeries::monomial(1), rng);
  const auto params = init_random(Dims{512, 3, 1, 5}, rng);
  const auto wsb = build_w_star(params, F, forward(params, null_sequence(5, 3, 0.2)), 0.1, 0.2, rng);
  // one column per i = 2..L-1
  EXPECT_EQ(wsb.factors.rank(), 3);
  EXPECT_NEAR(wsb.frobenius_norm(), wsb.dense().norm(), 1e-9 * (1 + wsb.dense().norm()));
  EXPECT_LE(wsb.row_norm_2_inf(), wsb.frobenius_norm() + 1e-12);
}
