#include "rnnlab/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rnnlab {

namespace {

// Golub-Welsch: eigen-decomposition of the Jacobi matrix of the
// orthogonal polynomial family with zero diagonal.
QuadratureRule golub_welsch(int n, double mu0, double (*offdiag_sq)(int)) {
  if (n < 1) throw std::invalid_argument("quadrature: need at least one node");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = std::sqrt(offdiag_sq(k));
    J(k, k - 1) = b;
    J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  QuadratureRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    rule.nodes[static_cast<std::size_t>(k)] = es.eigenvalues()(k);
    const double v0 = es.eigenvectors()(0, k);
    rule.weights[static_cast<std::size_t>(k)] = mu0 * v0 * v0;
  }
  return rule;
}

double hermite_offdiag(int k) { return static_cast<double>(k); }
double legendre_offdiag(int k) {
  const double kk = static_cast<double>(k);
  return kk * kk / (4.0 * kk * kk - 1.0);
}

}  // namespace

QuadratureRule gauss_hermite(int n) { return golub_welsch(n, 1.0, &hermite_offdiag); }

QuadratureRule gauss_legendre(int n) { return golub_welsch(n, 2.0, &legendre_offdiag); }

double hermite_he(int n, double x) {
  if (n < 0) throw std::invalid_argument("hermite_he: negative degree");
  if (n == 0) return 1.0;
  double prev = 1.0, cur = x;
  for (int k = 1; k < n; ++k) {
    const double next = x * cur - k * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

std::vector<double> hermite_he_all(int n, double x) {
  std::vector<double> out(static_cast<std::size_t>(n) + 1);
  out[0] = 1.0;
  if (n >= 1) out[1] = x;
  for (int k = 1; k < n; ++k) out[static_cast<std::size_t>(k) + 1] = x * out[static_cast<std::size_t>(k)] - k * out[static_cast<std::size_t>(k) - 1];
  return out;
}

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace rnnlab
