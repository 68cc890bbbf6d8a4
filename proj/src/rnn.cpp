#include "rnnlab/rnn.hpp"

#include <json.hpp>

#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

namespace rnnlab {

double rho_of(const Dims& dims) {
  return 100.0 * dims.L * dims.d * std::log(static_cast<double>(dims.m));
}

NetworkParams init_random(const Dims& dims, RngStream& rng) {
  if (dims.m < 2 || dims.d < 1 || dims.d_x < 1) {
    throw std::invalid_argument("init_random: need m >= 2, d >= 1, d_x >= 1");
  }
  NetworkParams p;
  p.dims = dims;
  const double sw = std::sqrt(2.0 / dims.m);
  p.W = gaussian_matrix(dims.m, dims.m, sw, rng);
  p.A = gaussian_matrix(dims.m, dims.d_x + 1, sw, rng);
  p.B = gaussian_matrix(dims.d, dims.m, 1.0 / std::sqrt(static_cast<double>(dims.d)), rng);
  return p;
}

void save_params(const std::filesystem::path& dir, const NetworkParams& params) {
  std::filesystem::create_directories(dir);
  save_matrix(dir / "W.rnnw", params.W);
  save_matrix(dir / "A.rnnw", params.A);
  save_matrix(dir / "B.rnnw", params.B);
}

NetworkParams load_params(const std::filesystem::path& dir, int L) {
  NetworkParams p;
  p.W = load_matrix(dir / "W.rnnw");
  p.A = load_matrix(dir / "A.rnnw");
  p.B = load_matrix(dir / "B.rnnw");
  if (p.W.rows() != p.W.cols() || p.A.rows() != p.W.rows() || p.B.cols() != p.W.rows()) {
    throw std::runtime_error("load_params: inconsistent matrix shapes in " + dir.string());
  }
  p.dims = Dims{static_cast<int>(p.W.rows()), static_cast<int>(p.A.cols()) - 1, static_cast<int>(p.B.rows()), L};
  return p;
}

Vector mask(const SignPattern& D, const Vector& v) { return D.select(v.array(), 0.0).matrix(); }

namespace {

void check_shapes(const NetworkParams& params, const Matrix& W_rec, const ActualSequence& x) {
  const auto m = params.A.rows();
  if (W_rec.rows() != m || W_rec.cols() != m || params.B.cols() != m) {
    throw std::invalid_argument("forward: weight shapes disagree");
  }
  if (x.L() < 1) throw std::invalid_argument("forward: empty input sequence");
  for (const auto& t : x.tokens) {
    if (t.size() != params.A.cols()) throw std::invalid_argument("forward: token dimension mismatch");
  }
}

void check_token_range(int i, int j, int L) {
  if (i < 1 || j > L || i > j) {
    throw std::invalid_argument("back operator: need 1 <= i <= j <= L, got i=" + std::to_string(i) +
                                ", j=" + std::to_string(j));
  }
}

}  // namespace

ForwardTrace forward(const NetworkParams& params, const ActualSequence& x) {
  return forward(params, params.W, x);
}

ForwardTrace forward(const NetworkParams& params, const Matrix& W_rec, const ActualSequence& x) {
  check_shapes(params, W_rec, x);
  const int L = x.L();
  const auto m = params.A.rows();
  ForwardTrace t;
  t.g.resize(static_cast<std::size_t>(L) + 1);
  t.h.resize(static_cast<std::size_t>(L) + 1);
  t.D.resize(static_cast<std::size_t>(L) + 1);
  t.y.resize(static_cast<std::size_t>(L) + 1);
  t.h[0] = Vector::Zero(m);
  for (int ell = 1; ell <= L; ++ell) {
    const auto k = static_cast<std::size_t>(ell);
    Vector g = params.A * x.at(ell);
    if (ell > 1) g.noalias() += W_rec * t.h[k - 1];
    t.D[k] = g.array() >= 0.0;
    t.h[k] = mask(t.D[k], g);
    t.y[k] = params.B * t.h[k];
    t.g[k] = std::move(g);
  }
  return t;
}

BackOperator::BackOperator(const ForwardTrace& trace, const Matrix& W, const Matrix& B, int i, int j)
    : trace_(trace), W_(W), B_(B), i_(i), j_(j) {
  check_token_range(i, j, trace.L());
}

Vector BackOperator::apply(const Vector& z) const {
  Vector v = z;
  for (int ell = i_ + 1; ell <= j_; ++ell) v = mask(trace_.D[static_cast<std::size_t>(ell)], W_ * v);
  return B_ * v;
}

Vector BackOperator::apply_transpose(const Vector& u) const {
  Vector v = B_.transpose() * u;
  for (int ell = j_; ell >= i_ + 1; --ell) {
    v = W_.transpose() * mask(trace_.D[static_cast<std::size_t>(ell)], v);
  }
  return v;
}

Matrix BackOperator::dense() const {
  const auto d = B_.rows();
  Matrix M(d, B_.cols());
  for (Eigen::Index r = 0; r < d; ++r) M.row(r) = apply_transpose(Vector::Unit(d, r)).transpose();
  return M;
}

Matrix back_operator(const ForwardTrace& trace, const NetworkParams& params, int i, int j) {
  return BackOperator(trace, params.W, params.B, i, j).dense();
}

Matrix injection_operator(const ForwardTrace& trace, const NetworkParams& params, int i, int j) {
  if (i >= j) throw std::invalid_argument("injection_operator: need i < j");
  check_token_range(i, j, trace.L());
  Matrix M = back_operator(trace, params, i + 1, j);
  const auto& D = trace.D[static_cast<std::size_t>(i) + 1];
  for (Eigen::Index r = 0; r < M.rows(); ++r) M.row(r) = mask(D, M.row(r).transpose()).transpose();
  return M;
}

std::vector<Vector> back_rows(const ForwardTrace& trace, const Matrix& W, const Matrix& B, int j,
                              const Vector& u) {
  check_token_range(1, j, trace.L());
  std::vector<Vector> rows(static_cast<std::size_t>(j) + 1);
  rows[static_cast<std::size_t>(j)] = B.transpose() * u;
  for (int i = j - 1; i >= 1; --i) {
    const auto k = static_cast<std::size_t>(i);
    rows[k] = W.transpose() * mask(trace.D[k + 1], rows[k + 1]);
  }
  return rows;
}

std::vector<Vector> first_order_all(const ForwardTrace& trace, const NetworkParams& params,
                                    const ShiftApply& Wp) {
  const int L = trace.L();
  const auto m = params.W.rows();
  std::vector<Vector> f(static_cast<std::size_t>(L) + 1);
  f[1] = Vector::Zero(params.B.rows());
  Vector v = Vector::Zero(m);  // tangent of h_1 (h_0 = 0, so W' h_0 = 0)
  for (int ell = 2; ell <= L; ++ell) {
    const auto k = static_cast<std::size_t>(ell);
    Vector pre = params.W * v;
    pre += Wp(trace.h[k - 1]);
    v = mask(trace.D[k], pre);
    f[k] = params.B * v;
  }
  return f;
}

Vector first_order_map(const ForwardTrace& trace, const NetworkParams& params, const Matrix& Wp, int j) {
  if (j < 1 || j > trace.L()) throw std::invalid_argument("first_order_map: token index out of range");
  if (Wp.rows() != params.W.rows() || Wp.cols() != params.W.cols()) {
    throw std::invalid_argument("first_order_map: perturbation shape mismatch");
  }
  return first_order_all(trace, params, [&](const Vector& h) -> Vector { return Wp * h; })[static_cast<std::size_t>(j)];
}

Vector first_order_map(const ForwardTrace& trace, const NetworkParams& params, const LowRankMatrix& Wp,
                       int j) {
  if (j < 1 || j > trace.L()) throw std::invalid_argument("first_order_map: token index out of range");
  return first_order_all(trace, params, [&](const Vector& h) { return Wp.apply(h); })[static_cast<std::size_t>(j)];
}

Matrix GradientFactors::dense(Eigen::Index m) const {
  Matrix G = Matrix::Zero(m, m);
  for (std::size_t k = 0; k < left.size(); ++k) G.noalias() += left[k] * right[k].transpose();
  return G;
}

double GradientFactors::frobenius_norm() const {
  double s = 0.0;
  for (std::size_t a = 0; a < left.size(); ++a) {
    for (std::size_t b = 0; b < left.size(); ++b) s += left[a].dot(left[b]) * right[a].dot(right[b]);
  }
  return std::sqrt(std::max(0.0, s));
}

GradientFactors gradient_factors(const NetworkParams& params, const Matrix& W_rec, const ActualSequence& x,
                                 const std::vector<Label>& labels, double lambda, LossKind loss) {
  const int L = x.L();
  if (L < 3) throw std::invalid_argument("gradient: need L >= 3");
  if (static_cast<int>(labels.size()) != L - 2) {
    throw std::invalid_argument("gradient: expected " + std::to_string(L - 2) + " labels");
  }
  GradientFactors out;
  out.trace = forward(params, W_rec, x);
  const auto& t = out.trace;
  const auto m = params.W.rows();
  std::vector<Vector> out_grad(static_cast<std::size_t>(L) + 1);
  for (int j = 3; j <= L; ++j) {
    const auto k = static_cast<std::size_t>(j);
    const LossValue lv = loss_eval(loss, lambda * t.y[k], labels[k - 3]);
    out.objective += lv.value;
    out_grad[k] = lambda * (params.B.transpose() * lv.grad);
  }
  if (!std::isfinite(out.objective)) throw std::runtime_error("gradient: non-finite objective");

  Vector a = Vector::Zero(m);
  for (int ell = L; ell >= 2; --ell) {
    const auto k = static_cast<std::size_t>(ell);
    if (ell >= 3) a += out_grad[k];
    Vector delta = mask(t.D[k], a);
    if (ell > 2) a = W_rec.transpose() * delta;
    out.left.push_back(std::move(delta));
    out.right.push_back(t.h[k - 1]);
  }
  return out;
}

Matrix gradient(const NetworkParams& params, const Matrix& Wt, const ActualSequence& x,
                const std::vector<Label>& labels, double lambda, LossKind loss) {
  const Matrix W_rec = params.W + Wt;
  const GradientFactors gf = gradient_factors(params, W_rec, x, labels, lambda, loss);
  Matrix G = gf.dense(params.W.rows());
  if (!G.allFinite()) throw std::runtime_error("gradient: non-finite entries");
  return G;
}

double objective(const NetworkParams& params, const Matrix& Wt, const ActualSequence& x,
                 const std::vector<Label>& labels, double lambda, LossKind loss) {
  const ForwardTrace t = forward(params, params.W + Wt, x);
  double obj = 0.0;
  for (int j = 3; j <= t.L(); ++j) {
    obj += loss_eval(loss, lambda * t.y[static_cast<std::size_t>(j)], labels.at(static_cast<std::size_t>(j) - 3)).value;
  }
  return obj;
}

void dump_trace(std::ostream& out, const ForwardTrace& trace, bool full) {
  auto to_list = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  for (int ell = 1; ell <= trace.L(); ++ell) {
    const auto k = static_cast<std::size_t>(ell);
    nlohmann::ordered_json rec;
    rec["token"] = ell;
    rec["g_norm"] = trace.g[k].norm();
    rec["h_norm"] = trace.h[k].norm();
    rec["g_inf"] = trace.g[k].cwiseAbs().maxCoeff();
    rec["active"] = trace.D[k].count();
    rec["y"] = to_list(trace.y[k]);
    if (full) {
      rec["g"] = to_list(trace.g[k]);
      rec["h"] = to_list(trace.h[k]);
    }
    out << rec.dump() << '\n';
  }
}

}  // namespace rnnlab
