#include "rnnlab/generalization.hpp"

#include <cmath>
#include <stdexcept>

#include "rnnlab/sgd.hpp"

namespace rnnlab {

namespace {

nlohmann::ordered_json finite_or_string(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
  MeanSe out;
  if (v.empty()) return out;
  for (double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  if (v.size() < 2) return out;
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  return out;
}

}  // namespace

nlohmann::ordered_json RadEstimate::to_json() const {
  nlohmann::ordered_json j;
  j["method"] = method;
  j["n_samples"] = n_samples;
  j["draws"] = draws;
  j["value"] = value;
  j["stderr"] = std_error;
  if (!per_output.empty()) j["per_output"] = per_output;
  if (max_feature_norm > 0) j["max_feature_norm"] = max_feature_norm;
  return j;
}

double linear_sup_exact(const std::vector<Vector>& xs, const std::vector<double>& sigma, double B) {
  if (xs.empty()) return 0.0;
  Vector s = Vector::Zero(xs.front().size());
  for (std::size_t i = 0; i < xs.size(); ++i) s += sigma.at(i) * xs[i];
  return B * s.norm() / static_cast<double>(xs.size());
}

double linear_sup_sampled(const std::vector<Vector>& xs, const std::vector<double>& sigma, double B, int points,
                          RngStream& rng) {
  if (xs.empty()) return 0.0;
  const auto dim = xs.front().size();
  Vector s = Vector::Zero(dim);
  for (std::size_t i = 0; i < xs.size(); ++i) s += sigma.at(i) * xs[i];
  double best = 0.0;
  for (int k = 0; k < points; ++k) {
    // uniform in the ball: direction times U^{1/dim}
    const Vector w = random_unit_vector(dim, rng) * (B * std::pow(rng.uniform(), 1.0 / static_cast<double>(dim)));
    best = std::max(best, w.dot(s));
  }
  return best / static_cast<double>(xs.size());
}

RadEstimate rademacher_linear(const std::vector<Vector>& xs, double B, int draws, RngStream& rng) {
  if (xs.empty()) throw std::invalid_argument("rademacher_linear: no samples");
  if (draws < 1) throw std::invalid_argument("rademacher_linear: need at least one draw");
  for (const auto& x : xs) {
    if (std::abs(x.norm() - 1.0) > 1e-9) throw std::invalid_argument("rademacher_linear: samples must be unit vectors");
  }
  RadEstimate est;
  est.method = "linear-exact";
  est.n_samples = static_cast<int>(xs.size());
  est.draws = draws;
  std::vector<double> vals;
  vals.reserve(static_cast<std::size_t>(draws));
  std::vector<double> sigma(xs.size());
  for (int t = 0; t < draws; ++t) {
    for (double& s : sigma) s = rng.rademacher();
    vals.push_back(linear_sup_exact(xs, sigma, B));
  }
  const auto ms = mean_se(vals);
  est.value = ms.mean;
  est.std_error = ms.se;
  return est;
}

BatchTrace batch_forward(const NetworkParams& params, const Matrix& W_rec, const std::vector<ActualSequence>& xs) {
  if (xs.empty()) throw std::invalid_argument("batch_forward: empty batch");
  const int L = xs.front().L();
  const auto m = params.A.rows();
  const auto n = static_cast<Eigen::Index>(xs.size());
  BatchTrace bt;
  bt.G.resize(static_cast<std::size_t>(L) + 1);
  bt.H.resize(static_cast<std::size_t>(L) + 1);
  bt.H[0] = Eigen::MatrixXd::Zero(m, n);
  for (int ell = 1; ell <= L; ++ell) {
    const auto k = static_cast<std::size_t>(ell);
    Eigen::MatrixXd X(params.A.cols(), n);
    for (Eigen::Index q = 0; q < n; ++q) {
      const auto& seq = xs[static_cast<std::size_t>(q)];
      if (seq.L() != L) throw std::invalid_argument("batch_forward: sequences differ in length");
      X.col(q) = seq.at(ell);
    }
    Eigen::MatrixXd G = params.A * X;
    if (ell > 1) G.noalias() += W_rec * bt.H[k - 1];
    bt.H[k] = G.cwiseMax(0.0);
    bt.G[k] = std::move(G);
  }
  return bt;
}

RadEstimate rademacher_rnn_linearized(const NetworkParams& params, const std::vector<ActualSequence>& xs,
                                      double Delta, int draws, RngStream& rng) {
  if (draws < 1) throw std::invalid_argument("rademacher_rnn_linearized: need at least one draw");
  const BatchTrace bt = batch_forward(params, params.W, xs);
  const int L = bt.L();
  const auto n = bt.size();
  const auto m = params.W.rows();
  const auto d = params.B.rows();
  RadEstimate est;
  est.method = "rnn-linearized";
  est.n_samples = static_cast<int>(n);
  est.draws = draws;

  // Same sign draws for every (j, s) so the sum has a meaningful stderr.
  Eigen::MatrixXd sigma(n, draws);
  for (int t = 0; t < draws; ++t) {
    for (Eigen::Index q = 0; q < n; ++q) sigma(q, t) = rng.rademacher();
  }
  Eigen::VectorXd total = Eigen::VectorXd::Zero(draws);
  const double scale = Delta / std::sqrt(static_cast<double>(m)) / static_cast<double>(n);
  for (int j = 3; j <= L; ++j) {
    for (Eigen::Index s = 0; s < d; ++s) {
      // R[i] holds (e_s^T Back_{i->j})^T for every sample (columns).
      std::vector<Eigen::MatrixXd> R(static_cast<std::size_t>(j) + 1);
      R[static_cast<std::size_t>(j)] = params.B.row(s).transpose().replicate(1, n);
      for (int i = j - 1; i >= 1; --i) {
        const auto k = static_cast<std::size_t>(i);
        const Eigen::MatrixXd masked = (bt.G[k + 1].array() >= 0.0).select(R[k + 1], 0.0);
        R[k] = params.W.transpose() * masked;
      }
      // U[i] = (e_s^T M_{i->j})^T = D_{i+1} (e_s^T Back_{i+1->j})^T
      std::vector<Eigen::MatrixXd> U(static_cast<std::size_t>(j));
      for (int i = 1; i < j; ++i) {
        const auto k = static_cast<std::size_t>(i);
        U[k] = (bt.G[k + 1].array() >= 0.0).select(R[k + 1], 0.0);
      }
      Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
      for (int i = 1; i < j; ++i) {
        for (int i2 = 1; i2 < j; ++i2) {
          const auto a = static_cast<std::size_t>(i);
          const auto b = static_cast<std::size_t>(i2);
          const Eigen::MatrixXd UU = U[a].transpose() * U[b];
          const Eigen::MatrixXd HH = bt.H[a].transpose() * bt.H[b];
          K.array() += UU.array() * HH.array();
        }
      }
      est.max_feature_norm = std::max(est.max_feature_norm, std::sqrt(K.diagonal().maxCoeff()));
      const Eigen::MatrixXd Ks = K * sigma;
      Eigen::VectorXd vals(draws);
      for (int t = 0; t < draws; ++t) vals[t] = scale * std::sqrt(std::max(0.0, sigma.col(t).dot(Ks.col(t))));
      est.per_output.push_back(vals.mean());
      total += vals;
    }
  }
  std::vector<double> tv(total.data(), total.data() + total.size());
  const auto ms = mean_se(tv);
  est.value = ms.mean;
  est.std_error = ms.se;
  return est;
}

nlohmann::ordered_json GapReport::to_json() const {
  nlohmann::ordered_json j;
  j["train_risk"] = train_risk;
  j["test_risk"] = test_risk;
  j["gap"] = gap;
  j["truncation"] = finite_or_string(truncation);
  j["train_risk_truncated"] = train_risk_truncated;
  j["test_risk_truncated"] = test_risk_truncated;
  j["Delta"] = Delta;
  j["predicted_gap"] = predicted_gap;
  j["rademacher"] = rademacher.to_json();
  return j;
}

GapReport measure_generalization(const NetworkParams& params, const Matrix& Wt,
                                 const std::vector<LabeledSample>& train, const std::vector<LabeledSample>& test,
                                 double eps_x, double lambda, LossKind loss, int draws, RngStream& rng,
                                 double truncation) {
  if (train.empty() || test.empty()) throw std::invalid_argument("measure_generalization: empty sample set");
  GapReport g;
  const Matrix W_rec = params.W + Wt;
  g.train_risk = batch_risk(params, W_rec, train, eps_x, lambda, loss);
  g.test_risk = batch_risk(params, W_rec, test, eps_x, lambda, loss);
  g.gap = g.test_risk - g.train_risk;
  g.truncation = truncation;
  g.train_risk_truncated = batch_risk(params, W_rec, train, eps_x, lambda, loss, truncation);
  g.test_risk_truncated = batch_risk(params, W_rec, test, eps_x, lambda, loss, truncation);
  g.Delta = std::sqrt(static_cast<double>(params.W.rows())) * Wt.norm();
  std::vector<ActualSequence> xs;
  xs.reserve(train.size());
  for (const auto& s : train) xs.push_back(to_actual(s.xstar, eps_x));
  g.rademacher = rademacher_rnn_linearized(params, xs, g.Delta, draws, rng);
  g.predicted_gap = 2.0 * lambda * g.rademacher.value;
  return g;
}

}  // namespace rnnlab
