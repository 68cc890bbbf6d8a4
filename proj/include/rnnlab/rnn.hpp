#pragma once

#include "rnnlab/inputs.hpp"
#include "rnnlab/loss.hpp"
#include "rnnlab/numerics.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <vector>

namespace rnnlab {

struct Dims {
  int m = 0;
  int d_x = 0;
  int d = 0;
  int L = 0;
};

// rho = 100 L d log m
double rho_of(const Dims& dims);

// h_ell = relu(W h_{ell-1} + A x_ell), output B h_ell.
struct NetworkParams {
  Dims dims;
  Matrix W;  // m x m
  Matrix A;  // m x (d_x + 1)
  Matrix B;  // d x m
};

// W, A ~ N(0, 2/m); B ~ N(0, 1/d), all entries i.i.d.
NetworkParams init_random(const Dims& dims, RngStream& rng);

void save_params(const std::filesystem::path& dir, const NetworkParams& params);
NetworkParams load_params(const std::filesystem::path& dir, int L);

using SignPattern = Eigen::Array<bool, Eigen::Dynamic, 1>;

// Token-indexed: g[ell], D[ell], y[ell] for 1 <= ell <= L and h[ell] for
// 0 <= ell <= L. Slot 0 of g, D, y is unused.
struct ForwardTrace {
  std::vector<Vector> g;
  std::vector<Vector> h;
  std::vector<SignPattern> D;
  std::vector<Vector> y;

  int L() const { return static_cast<int>(h.size()) - 1; }
};

// D-masking helper: v restricted to the active coordinates of D.
Vector mask(const SignPattern& D, const Vector& v);

ForwardTrace forward(const NetworkParams& params, const ActualSequence& x);
// Same recurrence with W replaced by W_rec (e.g. W + W').
ForwardTrace forward(const NetworkParams& params, const Matrix& W_rec, const ActualSequence& x);

// Back_{i->j} = B D_j W D_{j-1} W ... D_{i+1} W, with Back_{j->j} = B.
// Applied lazily through matrix-vector products.
class BackOperator {
 public:
  BackOperator(const ForwardTrace& trace, const Matrix& W, const Matrix& B, int i, int j);

  Vector apply(const Vector& z) const;            // R^m -> R^d
  Vector apply_transpose(const Vector& u) const;  // R^d -> R^m, i.e. (u^T Back)^T
  Matrix dense() const;                           // d x m

 private:
  const ForwardTrace& trace_;
  const Matrix& W_;
  const Matrix& B_;
  int i_;
  int j_;
};

Matrix back_operator(const ForwardTrace& trace, const NetworkParams& params, int i, int j);

// M_{i->j} = Back_{i+1->j} D_{i+1} for 1 <= i < j: the sensitivity of the
// token-j output to a perturbation W' h_i of the pre-activation g_{i+1}.
Matrix injection_operator(const ForwardTrace& trace, const NetworkParams& params, int i, int j);

// (u^T Back_{i->j})^T for every 1 <= i <= j, returned indexed by i (slot 0
// unused), from a single backward sweep.
std::vector<Vector> back_rows(const ForwardTrace& trace, const Matrix& W, const Matrix& B, int j,
                              const Vector& u);

// Linearized output change f_j(W') = sum_{i=1}^{j-1} M_{i->j} W' h_i,
// which is the exact Jacobian-vector product of B h_j in direction W'.
using ShiftApply = std::function<Vector(const Vector&)>;
std::vector<Vector> first_order_all(const ForwardTrace& trace, const NetworkParams& params,
                                    const ShiftApply& Wp);
Vector first_order_map(const ForwardTrace& trace, const NetworkParams& params, const Matrix& Wp, int j);
Vector first_order_map(const ForwardTrace& trace, const NetworkParams& params, const LowRankMatrix& Wp,
                       int j);

// Obj(W') = sum_{j=3}^{L} G(lambda B h_j(W + W'), y*_j); labels[k] is y*_{k+3}.
struct GradientFactors {
  double objective = 0.0;
  std::vector<Vector> left;   // delta_ell
  std::vector<Vector> right;  // h_{ell-1}
  ForwardTrace trace;

  Matrix dense(Eigen::Index m) const;
  double frobenius_norm() const;
};

GradientFactors gradient_factors(const NetworkParams& params, const Matrix& W_rec, const ActualSequence& x,
                                 const std::vector<Label>& labels, double lambda, LossKind loss);

// Gradient of Obj with respect to W' at W' = Wt (subgradient relu'(0) = 1).
Matrix gradient(const NetworkParams& params, const Matrix& Wt, const ActualSequence& x,
                const std::vector<Label>& labels, double lambda, LossKind loss);

double objective(const NetworkParams& params, const Matrix& Wt, const ActualSequence& x,
                 const std::vector<Label>& labels, double lambda, LossKind loss);

// JSON-lines, one record per token: norms and active-unit counts, plus the
// vectors themselves when full is set.
void dump_trace(std::ostream& out, const ForwardTrace& trace, bool full);

}  // namespace rnnlab
