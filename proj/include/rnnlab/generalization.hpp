#pragma once

#include "rnnlab/concept.hpp"
#include "rnnlab/rnn.hpp"

#include <json.hpp>

#include <limits>
#include <string>
#include <vector>

namespace rnnlab {

struct RadEstimate {
  int n_samples = 0;
  int draws = 0;
  std::string method;  // "linear-exact" or "rnn-linearized"
  double value = 0.0;
  double std_error = 0.0;
  std::vector<double> per_output;  // rnn: one entry per (j, s), j-major
  double max_feature_norm = 0.0;   // rnn: max_q ||G_q||_F over all (j, s)

  nlohmann::ordered_json to_json() const;
};

// Class {x -> <w, x> : ||w|| <= B} on unit vectors: the supremum is exact,
// (B/N) ||sum_i sigma_i x_i||, averaged over Monte Carlo sign draws.
RadEstimate rademacher_linear(const std::vector<Vector>& xs, double B, int draws, RngStream& rng);

// For one fixed sign vector: the exact supremum and a lower estimate from
// random points of the ball.
double linear_sup_exact(const std::vector<Vector>& xs, const std::vector<double>& sigma, double B);
double linear_sup_sampled(const std::vector<Vector>& xs, const std::vector<double>& sigma, double B, int points,
                          RngStream& rng);

// Token-major hidden states of a batch: H[ell] is m x N (ell = 0..L), and
// G[ell] the pre-activations (ell = 1..L).
struct BatchTrace {
  std::vector<Eigen::MatrixXd> G;
  std::vector<Eigen::MatrixXd> H;
  int L() const { return static_cast<int>(H.size()) - 1; }
  Eigen::Index size() const { return H.empty() ? 0 : H.front().cols(); }
};

BatchTrace batch_forward(const NetworkParams& params, const Matrix& W_rec, const std::vector<ActualSequence>& xs);

// Rademacher complexity of the linearized outputs
//   f_{j,s}(x; W') = <G_{j,s}(x), W'>,  ||W'||_F <= Delta / sqrt(m),
// G_{j,s}(x) = sum_{i<j} (e_s^T M_{i->j})^T h_i^T, taken at the initial weights.
// Per (j,s) the value is (Delta/sqrt m)(1/N) E sqrt(sigma^T K sigma) with
// K the Gram matrix of the G's; `value` is the sum over (j,s).
RadEstimate rademacher_rnn_linearized(const NetworkParams& params, const std::vector<ActualSequence>& xs,
                                      double Delta, int draws, RngStream& rng);

struct GapReport {
  double train_risk = 0.0;
  double test_risk = 0.0;
  double gap = 0.0;
  double train_risk_truncated = 0.0;
  double test_risk_truncated = 0.0;
  double truncation = std::numeric_limits<double>::infinity();
  double Delta = 0.0;           // sqrt(m) ||W_t||_F
  double predicted_gap = 0.0;   // 2 lambda sum_{j,s} R_{j,s}
  RadEstimate rademacher;

  nlohmann::ordered_json to_json() const;
};

GapReport measure_generalization(const NetworkParams& params, const Matrix& Wt,
                                 const std::vector<LabeledSample>& train, const std::vector<LabeledSample>& test,
                                 double eps_x, double lambda, LossKind loss, int draws, RngStream& rng,
                                 double truncation = 1.0);

}  // namespace rnnlab
