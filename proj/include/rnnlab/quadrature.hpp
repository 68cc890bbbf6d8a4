#pragma once

#include <vector>

namespace rnnlab {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Nodes/weights for E[f(Z)], Z ~ N(0,1) (probabilists' Gauss-Hermite).
QuadratureRule gauss_hermite(int n);

// Nodes/weights for the integral of f over [-1, 1].
QuadratureRule gauss_legendre(int n);

// Probabilists' Hermite polynomial He_n(x).
double hermite_he(int n, double x);

// He_0(x) .. He_n(x).
std::vector<double> hermite_he_all(int n, double x);

double normal_pdf(double x);
double normal_cdf(double x);

}  // namespace rnnlab
