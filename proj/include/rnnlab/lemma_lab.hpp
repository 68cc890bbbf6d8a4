#pragma once

#include "rnnlab/report.hpp"
#include "rnnlab/rnn.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace rnnlab {

// Shared configuration of the Monte Carlo checks. Envelope constants are
// frozen in frozen_envelopes(); any of them can be overridden by name.
struct LemmaConfig {
  Dims dims{4096, 4, 4, 8};  // m, d_x, d, L
  double eps_x = 0.05;
  int trials = 30;        // cheap statistics
  int heavy_trials = 3;   // statistics needing many matrix products
  std::uint64_t seed = 1;
  std::string init_items = "abcdefghijk";
  std::vector<int> m_grid{1024, 4096, 16384};
  std::vector<double> delta_grid{0.3, 1.0, 3.0};
  std::vector<double> coupling_delta_grid{0.03, 0.1, 0.3, 1.0};
  std::vector<int> coupling_m_grid{1024, 4096};
  std::vector<int> n_grid{4, 16, 64};
  std::vector<double> beta_grid{0.0, 0.1, -0.1, 0.25, -0.25, 0.5, -0.5, 0.75, -0.75};
  long mc_samples = 10000000;
  int sign_instances = 10000;
  int adversary_candidates = 16;
  std::map<std::string, double> envelope_overrides;

  double envelope(const std::string& name) const;
};

// Name -> constant, fixed after a calibration run.
const std::map<std::string, double>& frozen_envelopes();

// Valid ids for run_lemma in the order of the full suite.
const std::vector<std::string>& lemma_ids();

LemmaReport verify_init_properties(const LemmaConfig& cfg);
LemmaReport verify_backward_correlation(const LemmaConfig& cfg);
LemmaReport verify_drop_input(const LemmaConfig& cfg);
LemmaReport verify_rerandomization(const LemmaConfig& cfg);
LemmaReport verify_adversarial_stability(const LemmaConfig& cfg);
LemmaReport verify_coupling(const LemmaConfig& cfg);
LemmaReport verify_zeta_c(const LemmaConfig& cfg);
LemmaReport verify_sign_change_fact(const LemmaConfig& cfg);

// Dispatch by id; throws std::invalid_argument listing the valid ids.
LemmaReport run_lemma(const std::string& id, const LemmaConfig& cfg);

// zeta_c(beta) = E[(relu(alpha g1 + beta g2) - relu(g1))^2], alpha = sqrt(1 - beta^2)
double zeta_c(double beta);
// Power-series evaluation of the same quantity (arcsin expanded), used as
// an independent transcription.
double zeta_c_series(double beta, int terms = 60);
// x -> sign(x) zeta_c(sqrt|x|)
double zeta_c_sqrt(double x);

struct ZetaEstimate {
  double mean = 0.0;
  double se = 0.0;
};
ZetaEstimate zeta_c_monte_carlo(double beta, long samples, RngStream& rng);

// Sign-change fact, exact integer arithmetic. Entries are x_k = X_k / den,
// s = S / m; returns false iff the premise holds and the bound fails.
struct SignChangeInstance {
  std::vector<long> X;
  std::vector<long> Y;
  long den = 1;
  long q = 1;
};
int sign_flips(const SignChangeInstance& inst);
bool sign_change_premise(const SignChangeInstance& inst, long S);
bool sign_change_bound_holds(const SignChangeInstance& inst, long S);

// Rank-one W' = (Delta/sqrt m) u h_hat^T that pushes the k smallest |g|
// coordinates across zero, k chosen to maximize the number of flips.
LowRankMatrix targeted_sign_adversary(const Vector& g, const Vector& h_prev, double Delta);

// Forward pass with recurrent weights W + U V^T.
ForwardTrace forward_low_rank(const NetworkParams& params, const LowRankMatrix& shift, const ActualSequence& x);

long count_sign_changes(const SignPattern& a, const SignPattern& b);

}  // namespace rnnlab
