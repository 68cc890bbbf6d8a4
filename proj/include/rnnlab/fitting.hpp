#pragma once

#include "rnnlab/complexity.hpp"
#include "rnnlab/concept.hpp"
#include "rnnlab/report.hpp"
#include "rnnlab/rnn.hpp"

#include <array>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace rnnlab {

// Law of the noise n added to <a, x*> inside the indicator, in units where
// a ~ N(0, I): n = sigma * g + u with g ~ N(0,1) and u an independent
// truncated Gaussian on [-w, w] with scale window_scale (w = 0: no u).
struct NoiseModel {
  double sigma = 1.0;
  double window_half_width = 0.0;
  double window_scale = std::numeric_limits<double>::infinity();
};

struct FitOptions {
  double c_star = kDefaultCStar;
  double clamp = 0.0;  // 0: use c_eps(phi, max(sigma,1)) at eps_e
  int quad_b = 96;
  int quad_u = 32;
  bool check_residual = true;
};

class CalibrationError : public std::runtime_error {
 public:
  CalibrationError(const std::string& what, std::vector<double> residuals)
      : std::runtime_error(what), residuals_(std::move(residuals)) {}
  const std::vector<double>& residuals() const { return residuals_; }

 private:
  std::vector<double> residuals_;
};

// H(a) = clamp( sum_i beta_i He_i(z) psi_i(b) ) with z = <w*, a> over the
// first d_x - 1 coordinates and b the d_x-th coordinate of a;
// psi_0 = 1, psi_i(b) = (-1)^{i-1} He_{i-1}(b / (2 kappa)).
// The coefficients are calibrated so that
//   E[1[<a,x*> + n >= 0] H(a)] = Phi(<w*, x*>)
// for every admissible x*.
class FitFunction {
 public:
  TaylorSeries target;
  NoiseModel noise;
  double kappa = 0.0;  // sqrt(sigma^2 + 3/4)
  double clamp = 0.0;
  std::vector<double> hermite_coeffs;  // beta_i
  std::vector<double> normalizers;     // D_i
  std::vector<double> residual_t;      // grid of <w*, x*>
  std::vector<double> residuals;       // bound on |E[...] - Phi(t)| per grid point
  double max_residual = 0.0;
  bool precondition_ok = true;  // eps_e < 1 / c_s(phi, max(sigma,1))

  double raw(double z, double b) const;
  double operator()(double z, double b) const;
  // a holds at least d_x entries (only the first d_x are read).
  double at(const Vector& a, const Vector& wstar) const;

  // Exact expectation of the unclamped H under the calibrated noise, and
  // under Gaussian noise sigma scaled by gamma (the window part unchanged).
  double on_target(double t) const;
  double off_target(double t, double gamma) const;

  nlohmann::ordered_json report() const;
};

FitFunction calibrate_fit(const TaylorSeries& phi, const NoiseModel& noise, double eps_e,
                          const FitOptions& opts = {});

// Plain Gaussian-noise variant; requires sigma >= 0.1.
FitFunction fit_indicator_function(const TaylorSeries& phi, double sigma, double eps_e,
                                   const FitOptions& opts = {});

struct WStarOptions {
  double c_star = kDefaultCStar;
  double eps_c = 0.0;  // 0: eps_e * eps_x / (4 C') per term
  int pilot_samples = 16;
  TokenDistribution tokens;
  FitOptions fit;
};

struct TermCalibration {
  double eps_c = 0.0;
  double eps_c_prime = 0.0;  // Gaussian window probability
  double window_fraction = 0.0;  // measured fraction of rows in the window
  double sigma = 0.0;
  double kappa = 0.0;
  double clamp = 0.0;
  double max_residual = 0.0;
};

// W* = U V^T with V's columns h^(0)_{i-1} for i = 2..L-1.
struct WStarBundle {
  LowRankMatrix factors;
  std::map<std::array<int, 3>, double> normalizers;  // (i, j, s) -> C_{i->j,s}
  std::map<TermKey, TermCalibration> calibration;
  std::vector<double> tau;      // indexed by i (slots 0, 1 unused)
  std::vector<double> overlap;  // <h^(0)_{i-1}, h_{i-1}> / ||h^(0)_{i-1}||^2, pilot mean
  double C_range = 0.0;         // max 4 C'^2 / (eps_e eps_x)
  double eps_e = 0.0;
  double eps_x = 0.0;

  Matrix dense() const { return factors.dense(); }
  double frobenius_norm() const { return factors.frobenius_norm(); }
  double row_norm_2_inf() const;
  nlohmann::ordered_json report() const;
};

WStarBundle build_w_star(const NetworkParams& params, const TargetFunction& F, const ForwardTrace& null_trace,
                         double eps_e, double eps_x, RngStream& rng, const WStarOptions& opts = {});

// max_{j,s} |f_{j,s}(W*) - F*_{j,s}(x*)|, optionally after shifting the
// network weights to W + perturbation.
double existence_error(const NetworkParams& params, const WStarBundle& wsb, const TargetFunction& F,
                       const TrueSequence& xstar, const Matrix* perturbation = nullptr);

LemmaReport verify_existence(const NetworkParams& params, const WStarBundle& wsb, const TargetFunction& F,
                             const TrueSequence& xstar, double eps_target,
                             const Matrix* perturbation = nullptr);

}  // namespace rnnlab
