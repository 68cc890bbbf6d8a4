#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rnnlab/lemma_lab.hpp"

using namespace rnnlab;

namespace {

// E[(relu(alpha g1 + beta g2) - relu(g1))^2] in polar coordinates: the
// radial part contributes E r^2 = 2, the angular part is piecewise smooth
// with kinks where cos(theta) or cos(theta - phi) vanish.
double zeta_quadrature(double beta) {
  const double alpha = std::sqrt(1.0 - beta * beta);
  const double pi = std::numbers::pi;
  auto f = [&](double t) {
    const double d = std::max(0.0, alpha * std::cos(t) + beta * std::sin(t)) - std::max(0.0, std::cos(t));
    return d * d;
  };
  const double phi = std::atan2(beta, alpha);
  std::vector<double> cuts{-pi, pi, -pi / 2, pi / 2};
  for (double c : {phi - pi / 2, phi + pi / 2}) {
    if (c > pi) c -= 2 * pi;
    if (c < -pi) c += 2 * pi;
    cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  double total = 0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    if (cuts[k + 1] - cuts[k] < 1e-15) continue;
    total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, cuts[k], cuts[k + 1], 0, 1e-14);
  }
  return 2.0 * total / (2 * pi);
}

// Floating-point restatement of the sign-change bound with s = S/m.
bool bound_oracle(const SignChangeInstance& inst, long S, bool* premise) {
  const long m = static_cast<long>(inst.X.size());
  const long double s = static_cast<long double>(S) / m, den = inst.den, q = inst.q;
  long small = 0, flips = 0;
  long double dist2 = 0;
  for (long k = 0; k < m; ++k) {
    const long double x = inst.X[k] / den, y = inst.Y[k] / den;
    small += std::fabs(x) <= s / q + 1e-15L;
    flips += (x >= 0) != (y >= 0);
    dist2 += (x - y) * (x - y);
  }
  *premise = small <= S;
  return !*premise || flips <= s * m + dist2 * q * q / (s * s) + 1e-12L;
}

LemmaConfig small_config() {
  LemmaConfig cfg;
  cfg.dims = Dims{128, 3, 2, 5};
  cfg.trials = 4;
  cfg.heavy_trials = 2;
  cfg.m_grid = {64, 128, 256};
  cfg.coupling_m_grid = {64, 128};
  cfg.n_grid = {2, 4, 8};
  cfg.mc_samples = 20000;
  cfg.sign_instances = 200;
  cfg.adversary_candidates = 4;
  return cfg;
}

}  // namespace

TEST(ZetaC, ClosedFormMatchesIndependentQuadrature) {
  for (double b : {0.0, 0.05, -0.1, 0.25, -0.5, 0.75, 0.9, -1.0}) {
    EXPECT_NEAR(zeta_c(b), zeta_quadrature(b), 1e-12) << "beta=" << b;
  }
}

TEST(ZetaC, SeriesAgreesAndIsEven) {
  for (double b : {0.0, 0.1, 0.3, 0.6, 0.8}) {
    EXPECT_NEAR(zeta_c_series(b), zeta_c(b), 1e-13);
    EXPECT_EQ(zeta_c(b), zeta_c(-b));
  }
  EXPECT_EQ(zeta_c(0.0), 0.0);
  EXPECT_THROW(zeta_c(1.5), std::invalid_argument);
}

TEST(ZetaC, QuadraticNearZeroWithinBounds) {
  for (double b = -0.99; b <= 0.99; b += 0.01) {
    const double excess = zeta_c(b) - 0.5 * b * b;
    EXPECT_GE(excess, -std::pow(std::abs(b), 3) - 1e-16);
    EXPECT_LE(excess, std::pow(b, 4) / 4 + 1e-16);
  }
}

TEST(ZetaC, SqrtMapIsOddAndHalfLipschitzNearZero) {
  EXPECT_EQ(zeta_c_sqrt(-0.01), -zeta_c_sqrt(0.01));
  for (double x = -0.05; x < 0.05; x += 1e-4) EXPECT_LE(std::abs(zeta_c_sqrt(x + 1e-4) - zeta_c_sqrt(x)), 0.5e-4 + 1e-15);
}

TEST(ZetaC, MonteCarloStandardError) {
  RngStream rng(3, 3);
  const auto e = zeta_c_monte_carlo(0.5, 200000, rng);
  EXPECT_NEAR(e.mean, zeta_c(0.5), 4 * e.se);
  EXPECT_GT(e.se, 0.0);
  EXPECT_THROW(zeta_c_monte_carlo(0.5, 1, rng), std::invalid_argument);
}

TEST(SignChange, ExactArithmeticAgreesWithFloatingRestatement) {
  RngStream rng(4, 4);
  long premise_seen = 0;
  for (int n = 0; n < 3000; ++n) {
    SignChangeInstance inst;
    const int m = 2 + static_cast<int>(rng.index(9));
    inst.den = 8;
    inst.q = 1 + static_cast<long>(rng.index(3));
    for (int k = 0; k < m; ++k) {
      inst.X.push_back(static_cast<long>(rng.index(17)) - 8);
      inst.Y.push_back(static_cast<long>(rng.index(17)) - 8);
    }
    for (long S = 1; S <= m; ++S) {
      bool premise = false;
      const bool ok = bound_oracle(inst, S, &premise);
      EXPECT_EQ(sign_change_premise(inst, S), premise);
      EXPECT_EQ(sign_change_bound_holds(inst, S), ok);
      EXPECT_TRUE(ok);
      premise_seen += premise;
    }
  }
  EXPECT_GT(premise_seen, 1000);
}

TEST(SignChange, FlipsTreatZeroAsNonnegative) {
  SignChangeInstance inst{{0, 1, -1, 2}, {-1, 1, 0, 2}, 4, 1};
  EXPECT_EQ(sign_flips(inst), 2);
  SignPattern a(3), b(3);
  a << true, false, true;
  b << true, true, false;
  EXPECT_EQ(count_sign_changes(a, b), 2);
}

TEST(Adversary, RankOneWithRequestedNormAndBeatsRandomDirection) {
  RngStream rng(5, 5);
  const int m = 2000;
  const Vector g = gaussian_vector(m, 1.0, rng);
  const Vector h = gaussian_vector(m, 1.0, rng).cwiseMax(0.0);
  const double Delta = 1.0;
  const auto W = targeted_sign_adversary(g, h, Delta);
  EXPECT_EQ(W.rank(), 1);
  EXPECT_NEAR(W.frobenius_norm(), Delta / std::sqrt(double(m)), 1e-12);
  auto flips = [&](const Vector& shift) {
    long f = 0;
    for (int k = 0; k < m; ++k) f += (g[k] >= 0) != (g[k] + shift[k] >= 0);
    return f;
  };
  const long targeted = flips(W.apply(h));
  const Vector u = random_unit_vector(m, rng) * (Delta / std::sqrt(double(m)));
  const long random = flips(u * h.norm());
  EXPECT_GT(targeted, random);
  EXPECT_GT(targeted, 0);
  EXPECT_EQ(targeted_sign_adversary(g, h, 0.0).frobenius_norm(), 0.0);
}

TEST(ForwardLowRank, MatchesDenseForward) {
  RngStream rng(6, 6);
  const auto params = init_random(Dims{50, 3, 2, 5}, rng);
  const auto x = to_actual(sample_true_sequence(5, 3, TokenDistribution{}, rng), 0.2);
  LowRankMatrix lr{gaussian_matrix(50, 2, 0.05, rng), gaussian_matrix(50, 2, 0.05, rng)};
  const auto a = forward_low_rank(params, lr, x);
  const auto b = forward(params, Matrix(params.W + lr.dense()), x);
  for (int ell = 1; ell <= 5; ++ell) EXPECT_LT((a.h[ell] - b.h[ell]).norm(), 1e-12);
}

TEST(Envelopes, FrozenTableAndOverrides) {
  LemmaConfig cfg;
  EXPECT_EQ(cfg.envelope("zeta.lipschitz"), 0.5);
  cfg.envelope_overrides["zeta.lipschitz"] = 0.1;
  EXPECT_EQ(cfg.envelope("zeta.lipschitz"), 0.1);
  EXPECT_THROW(cfg.envelope("no.such.constant"), std::invalid_argument);
  for (const auto& [name, value] : frozen_envelopes()) EXPECT_TRUE(std::isfinite(value)) << name;
}

TEST(RunLemma, UnknownIdListsValidIds) {
  try {
    run_lemma("nope", LemmaConfig{});
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    for (const auto& id : lemma_ids()) EXPECT_NE(std::string(e.what()).find(id), std::string::npos) << id;
  }
}

// Every check runs end to end at a small width and produces a well-formed
// report; pass/fail at this scale is not asserted.
TEST(RunLemma, SmallWidthSmoke) {
  const LemmaConfig cfg = small_config();
  for (const auto& id : lemma_ids()) {
    SCOPED_TRACE(id);
    const LemmaReport r = run_lemma(id, cfg);
    EXPECT_EQ(r.lemma_id, id);
    // parents with sub-items carry the envelopes on the items
    EXPECT_TRUE(!r.envelope.empty() || !r.items.empty());
    for (const auto& it : r.items) EXPECT_FALSE(it.envelope.empty()) << it.lemma_id;
    const auto j = r.to_json();
    EXPECT_TRUE(j.contains("pass"));
    for (const auto& [name, v] : r.statistics) EXPECT_FALSE(std::isnan(v)) << name;
  }
}

// Fault injection: tightening a constant below the measured statistic flips
// the verdict.
TEST(RunLemma, TightenedEnvelopeFails) {
  LemmaConfig cfg = small_config();
  cfg.mc_samples = 200000;
  ASSERT_TRUE(verify_zeta_c(cfg).pass);
  cfg.envelope_overrides["zeta.lipschitz"] = 0.1;
  EXPECT_FALSE(verify_zeta_c(cfg).pass);

  const LemmaReport base = verify_sign_change_fact(cfg);
  ASSERT_TRUE(base.pass);
  cfg.envelope_overrides["sign.violations"] = -1;
  EXPECT_FALSE(verify_sign_change_fact(cfg).pass);
}

TEST(RunLemma, InitSubItemsFilter) {
  LemmaConfig cfg = small_config();
  cfg.init_items = "ac";
  const auto r = verify_init_properties(cfg);
  ASSERT_EQ(r.items.size(), 2u);
  EXPECT_EQ(r.items[0].lemma_id, "init.a");
  EXPECT_EQ(r.items[1].lemma_id, "init.c");
  // the frozen bound for (a) is loose by orders of magnitude; a zero
  // constant must fail it
  cfg.init_items = "a";
  cfg.envelope_overrides["init.a"] = 0.0;
  EXPECT_FALSE(verify_init_properties(cfg).pass);
}
