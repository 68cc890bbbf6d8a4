#pragma once

#include "rnnlab/concept.hpp"
#include "rnnlab/rnn.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rnnlab {

struct HyperParams {
  double eps = 0.0;
  double eps_x = 0.0;
  double lambda = 0.0;
  double eta = 0.0;
  long T = 0;
  int m = 0, L = 0, d = 0, d_x = 0, p = 0;
  double rho = 0.0;
  double varrho = 0.0;
  double Delta_cap = 0.0;  // trajectory cap ||W_t||_F <= Delta_cap / sqrt(m)
  std::vector<std::string> overridden;
  std::vector<std::string> warnings;

  bool is_overridden(const std::string& name) const;
};

struct HyperOverrides {
  std::optional<double> lambda;
  std::optional<double> eta;
  std::optional<long> T;
  double c_eta = 1.0;
  double c_T = 1.0;
  double c_Delta = 1.0;
  long T_cap = 200000;
};

// lambda = eps / (10 L rho), eta = c_eta / (eps rho^2 m),
// T = min(c_T p^2 C^2 / eps^2, T_cap), Delta = c_Delta p^2 C^2 rho^2 / eps^2.
HyperParams derive_hyperparams(const ConceptComplexity& cc, const Dims& dims, double eps, double eps_x,
                               const HyperOverrides& ov = {});

// Mean over samples of sum_{j=3}^{L} G(lambda B h_j(W_rec), y*_j), computed
// with one matrix-matrix product per token. Each per-token loss is capped
// at `truncate` (no cap by default).
double batch_risk(const NetworkParams& params, const Matrix& W_rec, const std::vector<LabeledSample>& samples,
                  double eps_x, double lambda, LossKind loss,
                  double truncate = std::numeric_limits<double>::infinity());

struct TrainPoint {
  long step = 0;
  double empirical_risk = 0.0;
  double heldout_risk = 0.0;  // NaN without a held-out set
  double frobenius_norm = 0.0;
};

struct TrainOptions {
  long eval_every = 500;
  int flush_every = 16;  // pending rank-1 updates folded into the dense matrix
  const std::vector<LabeledSample>* heldout = nullptr;
  std::ostream* csv = nullptr;
  std::function<void(const TrainPoint&)> on_eval;
  std::string snapshot_dir;  // diagnostic snapshot on failure (empty: none)
  long snapshot_every = 0;   // also Wt_step<t>.rnnw every this many steps (0: off)
};

struct TrainResult {
  Matrix Wt;
  long steps = 0;
  std::vector<TrainPoint> curve;
  TrainPoint best;             // evaluation point with the lowest empirical risk
  double average_risk = 0.0;   // mean empirical risk over evaluation points
  double average_online_objective = 0.0;  // mean sampled objective over steps
  double max_step_norm = 0.0;  // max_t eta ||grad_t||_F
  // ||W_t||_F is exact at evaluation points; between them it is tracked
  // through the bound ||W_e||_F + sum eta ||grad||_F. Max over all steps:
  double max_frobenius_bound = 0.0;
  bool delta_cap_exceeded = false;
  std::uint64_t trajectory_hash = 0;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, long step) : std::runtime_error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

// Plain single-sample SGD on W' starting from W_0 = 0; each step samples
// one training example uniformly with replacement.
TrainResult train(const NetworkParams& params, const Dataset& data, const HyperParams& hp, RngStream& rng,
                  const TrainOptions& opts = {});

void write_curve_header(std::ostream& out);

}  // namespace rnnlab
