#include "rnnlab/sgd.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <limits>
#include <ostream>

namespace rnnlab {

bool HyperParams::is_overridden(const std::string& name) const {
  return std::find(overridden.begin(), overridden.end(), name) != overridden.end();
}

HyperParams derive_hyperparams(const ConceptComplexity& cc, const Dims& dims, double eps, double eps_x,
                               const HyperOverrides& ov) {
  if (dims.m < 2 || dims.L < 3 || dims.d < 1) throw std::invalid_argument("derive_hyperparams: bad dimensions");
  HyperParams hp;
  hp.eps = eps;
  hp.eps_x = eps_x;
  hp.m = dims.m;
  hp.L = dims.L;
  hp.d = dims.d;
  hp.d_x = dims.d_x;
  hp.p = cc.p;
  const double logm = std::log(static_cast<double>(dims.m));
  hp.rho = rho_of(dims);
  hp.varrho = 100.0 * dims.L * dims.d * cc.p * cc.C_sound_varrho * logm / eps;
  hp.lambda = eps / (10.0 * dims.L * hp.rho);
  hp.eta = ov.c_eta / (eps * hp.rho * hp.rho * dims.m);
  const double p2C2 = static_cast<double>(cc.p) * cc.p * cc.C * cc.C;
  const double T_formula = ov.c_T * p2C2 / (eps * eps);
  hp.T = static_cast<long>(std::min(T_formula, static_cast<double>(ov.T_cap)));
  hp.Delta_cap = ov.c_Delta * p2C2 * hp.rho * hp.rho / (eps * eps);

  if (ov.lambda) {
    hp.lambda = *ov.lambda;
    hp.overridden.emplace_back("lambda");
  }
  if (ov.eta) {
    hp.eta = *ov.eta;
    hp.overridden.emplace_back("eta");
  }
  if (ov.T) {
    hp.T = *ov.T;
    hp.overridden.emplace_back("T");
  }
  if (!(eps > 0 && eps < 1)) hp.warnings.emplace_back("eps outside (0,1)");
  if (static_cast<double>(dims.m) < hp.varrho) hp.warnings.emplace_back("m below varrho: asymptotic regime not reached");
  if (T_formula > static_cast<double>(ov.T_cap) && !ov.T) hp.warnings.emplace_back("T clipped to T_cap");
  if (!(hp.lambda > 0) || !(hp.eta >= 0)) throw std::invalid_argument("derive_hyperparams: need lambda > 0, eta >= 0");
  return hp;
}

double batch_risk(const NetworkParams& params, const Matrix& W_rec, const std::vector<LabeledSample>& samples,
                  double eps_x, double lambda, LossKind loss, double truncate) {
  if (samples.empty()) return 0.0;
  const int L = samples.front().xstar.L();
  const auto m = params.W.rows();
  const Eigen::Index in_dim = params.A.cols();
  constexpr std::size_t kChunk = 256;
  double total = 0.0;
  for (std::size_t lo = 0; lo < samples.size(); lo += kChunk) {
    const std::size_t hi = std::min(samples.size(), lo + kChunk);
    const auto n = static_cast<Eigen::Index>(hi - lo);
    std::vector<ActualSequence> xs;
    xs.reserve(hi - lo);
    for (std::size_t q = lo; q < hi; ++q) xs.push_back(to_actual(samples[q].xstar, eps_x));
    Eigen::MatrixXd H(m, n);
    {
      const Vector h1 = params.A * xs.front().at(1);
      H = h1.cwiseMax(0.0).replicate(1, n);
    }
    for (int ell = 2; ell <= L; ++ell) {
      Eigen::MatrixXd X(in_dim, n);
      for (Eigen::Index q = 0; q < n; ++q) X.col(q) = xs[static_cast<std::size_t>(q)].at(ell);
      Eigen::MatrixXd G = W_rec * H;
      G.noalias() += params.A * X;
      H = G.cwiseMax(0.0);
      if (ell < 3) continue;
      const Eigen::MatrixXd Y = lambda * (params.B * H);
      for (Eigen::Index q = 0; q < n; ++q) {
        const auto& y = samples[lo + static_cast<std::size_t>(q)].ystar.at(static_cast<std::size_t>(ell - 3));
        total += std::min(loss_eval(loss, Y.col(q), y).value, truncate);
      }
    }
  }
  return total / static_cast<double>(samples.size());
}

void write_curve_header(std::ostream& out) {
  out << "step,empirical_risk,population_risk_estimate,frobenius_norm\n";
}

namespace {

struct Fnv1a {
  std::uint64_t state = 0xcbf29ce484222325ULL;
  void add(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      state ^= (v >> (8 * b)) & 0xffU;
      state *= 0x100000001b3ULL;
    }
  }
  void add(double v) { add(std::bit_cast<std::uint64_t>(v)); }
};

// W + W_t held as a dense matrix plus not-yet-folded rank-1 updates.
class EffectiveWeights {
 public:
  EffectiveWeights(const Matrix& W, int capacity)
      : dense_(W), U_(W.rows(), capacity), V_(W.rows(), capacity) {}

  Vector apply(const Vector& v) const {
    Vector out = dense_ * v;
    if (rank_ > 0) out.noalias() += U_.leftCols(rank_) * (V_.leftCols(rank_).transpose() * v);
    return out;
  }
  Vector apply_transpose(const Vector& u) const {
    Vector out = dense_.transpose() * u;
    if (rank_ > 0) out.noalias() += V_.leftCols(rank_) * (U_.leftCols(rank_).transpose() * u);
    return out;
  }
  // Pending contribution to W h for a vector whose dense product is cached.
  Vector pending_apply(const Vector& v) const {
    if (rank_ == 0) return Vector::Zero(dense_.rows());
    return U_.leftCols(rank_) * (V_.leftCols(rank_).transpose() * v);
  }
  bool has_room(int k) const { return rank_ + k <= U_.cols(); }
  void push(const Vector& u, const Vector& v) {
    U_.col(rank_) = u;
    V_.col(rank_) = v;
    ++rank_;
  }
  bool flush() {
    if (rank_ == 0) return false;
    dense_.noalias() += U_.leftCols(rank_) * V_.leftCols(rank_).transpose();
    rank_ = 0;
    return true;
  }
  const Matrix& dense() const { return dense_; }

 private:
  Matrix dense_;
  Eigen::MatrixXd U_;
  Eigen::MatrixXd V_;
  Eigen::Index rank_ = 0;
};

}  // namespace

TrainResult train(const NetworkParams& params, const Dataset& data, const HyperParams& hp, RngStream& rng,
                  const TrainOptions& opts) {
  if (data.samples.empty()) throw std::invalid_argument("train: empty dataset");
  const int L = data.samples.front().xstar.L();
  if (L < 3) throw std::invalid_argument("train: need L >= 3");
  const auto m = params.W.rows();
  const double frob_cap = hp.Delta_cap / std::sqrt(static_cast<double>(m));
  const int n_terms = L - 1;
  const int capacity = std::max(1, opts.flush_every) * n_terms;

  std::vector<ActualSequence> xs;
  xs.reserve(data.samples.size());
  for (const auto& s : data.samples) xs.push_back(to_actual(s.xstar, hp.eps_x));
  const Vector h1 = (params.A * xs.front().at(1)).cwiseMax(0.0);

  EffectiveWeights weff(params.W, capacity);
  Vector Wh1 = weff.dense() * h1;

  TrainResult res;
  Fnv1a hash;
  double frob_exact = 0.0;   // at the last evaluation point
  double frob_bound = 0.0;   // triangle-inequality bound since then
  double online_sum = 0.0;

  auto evaluate = [&](long step) {
    if (weff.flush()) Wh1 = weff.dense() * h1;
    TrainPoint pt;
    pt.step = step;
    pt.empirical_risk = batch_risk(params, weff.dense(), data.samples, hp.eps_x, hp.lambda, data.loss);
    pt.heldout_risk = opts.heldout ? batch_risk(params, weff.dense(), *opts.heldout, hp.eps_x, hp.lambda, data.loss)
                                   : std::numeric_limits<double>::quiet_NaN();
    frob_exact = (weff.dense() - params.W).norm();
    frob_bound = frob_exact;
    pt.frobenius_norm = frob_exact;
    if (frob_exact > frob_cap) res.delta_cap_exceeded = true;
    res.curve.push_back(pt);
    if (res.curve.size() == 1 || pt.empirical_risk < res.best.empirical_risk) res.best = pt;
    if (opts.csv) {
      *opts.csv << pt.step << ',' << pt.empirical_risk << ',' << pt.heldout_risk << ',' << pt.frobenius_norm << '\n';
    }
    if (opts.on_eval) opts.on_eval(pt);
  };

  auto fail = [&](const std::string& why, long step) {
    if (!opts.snapshot_dir.empty()) {
      weff.flush();
      std::filesystem::create_directories(opts.snapshot_dir);
      save_matrix(std::filesystem::path(opts.snapshot_dir) / "Wt_failure.rnnw", Matrix(weff.dense() - params.W));
    }
    throw TrainingError("train: " + why + " at step " + std::to_string(step), step);
  };

  evaluate(0);
  std::vector<Vector> h(static_cast<std::size_t>(L) + 1);
  std::vector<SignPattern> D(static_cast<std::size_t>(L) + 1);
  std::vector<Vector> out_grad(static_cast<std::size_t>(L) + 1);
  std::vector<Vector> left, right;
  for (long t = 1; t <= hp.T; ++t) {
    const std::size_t idx = rng.index(data.samples.size());
    const auto& x = xs[idx];
    const auto& labels = data.samples[idx].ystar;

    // forward
    h[1] = h1;
    for (int ell = 2; ell <= L; ++ell) {
      const auto k = static_cast<std::size_t>(ell);
      Vector g = params.A * x.at(ell);
      if (ell == 2) g += Wh1 + weff.pending_apply(h1);
      else g += weff.apply(h[k - 1]);
      D[k] = g.array() >= 0.0;
      h[k] = mask(D[k], g);
    }
    double obj = 0.0;
    try {
      for (int j = 3; j <= L; ++j) {
        const auto k = static_cast<std::size_t>(j);
        const LossValue lv = loss_eval(data.loss, hp.lambda * (params.B * h[k]), labels[k - 3]);
        obj += lv.value;
        out_grad[k] = hp.lambda * (params.B.transpose() * lv.grad);
      }
    } catch (const std::runtime_error& e) {
      fail(e.what(), t);
    }
    // backward
    left.clear();
    right.clear();
    Vector a = Vector::Zero(m);
    for (int ell = L; ell >= 2; --ell) {
      const auto k = static_cast<std::size_t>(ell);
      if (ell >= 3) a += out_grad[k];
      Vector delta = mask(D[k], a);
      if (ell > 2) a = weff.apply_transpose(delta);
      left.push_back(std::move(delta));
      right.push_back(h[k - 1]);
    }
    double gn2 = 0.0;
    for (std::size_t p = 0; p < left.size(); ++p) {
      for (std::size_t q = 0; q < left.size(); ++q) gn2 += left[p].dot(left[q]) * right[p].dot(right[q]);
    }
    const double gnorm = std::sqrt(std::max(0.0, gn2));
    if (!std::isfinite(obj) || !std::isfinite(gnorm)) fail("non-finite gradient", t);

    hash.add(static_cast<std::uint64_t>(idx));
    hash.add(obj);
    online_sum += obj;
    res.max_step_norm = std::max(res.max_step_norm, hp.eta * gnorm);
    frob_bound += hp.eta * gnorm;
    res.max_frobenius_bound = std::max(res.max_frobenius_bound, frob_bound);

    if (hp.eta != 0.0) {
      if (!weff.has_room(static_cast<int>(left.size()))) {
        weff.flush();
        Wh1 = weff.dense() * h1;
      }
      for (std::size_t p = 0; p < left.size(); ++p) weff.push(-hp.eta * left[p], right[p]);
    }
    res.steps = t;
    if (opts.snapshot_every > 0 && !opts.snapshot_dir.empty() && t % opts.snapshot_every == 0) {
      if (weff.flush()) Wh1 = weff.dense() * h1;
      std::filesystem::create_directories(opts.snapshot_dir);
      save_matrix(std::filesystem::path(opts.snapshot_dir) / ("Wt_step" + std::to_string(t) + ".rnnw"),
                  Matrix(weff.dense() - params.W));
    }
    if (opts.eval_every > 0 && (t % opts.eval_every == 0 || t == hp.T)) evaluate(t);
  }
  if (res.curve.back().step != res.steps) evaluate(res.steps);
  weff.flush();
  res.Wt = weff.dense() - params.W;
  hash.add(res.Wt.norm());
  res.trajectory_hash = hash.state;
  double avg = 0.0;
  for (const auto& pt : res.curve) avg += pt.empirical_risk;
  res.average_risk = avg / static_cast<double>(res.curve.size());
  res.average_online_objective = res.steps > 0 ? online_sum / static_cast<double>(res.steps) : 0.0;
  return res;
}

}  // namespace rnnlab
