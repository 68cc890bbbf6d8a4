#pragma once

#include "rnnlab/numerics.hpp"

#include <span>
#include <vector>

namespace rnnlab {

// True tokens x*_2 .. x*_{L-1}; each is a unit vector of R^{d_x} whose last
// coordinate is 1/2.
struct TrueSequence {
  std::vector<Vector> tokens;

  int L() const { return static_cast<int>(tokens.size()) + 2; }
  int d_x() const { return tokens.empty() ? 0 : static_cast<int>(tokens.front().size()); }
  // 2 <= ell <= L-1
  const Vector& at(int ell) const { return tokens.at(static_cast<std::size_t>(ell - 2)); }
};

// Network inputs x_1 .. x_L in R^{d_x+1}.
struct ActualSequence {
  std::vector<Vector> tokens;
  double eps_x = 0.0;

  int L() const { return static_cast<int>(tokens.size()); }
  int input_dim() const { return tokens.empty() ? 0 : static_cast<int>(tokens.front().size()); }
  // 1 <= ell <= L
  const Vector& at(int ell) const { return tokens.at(static_cast<std::size_t>(ell - 1)); }
};

// Null inputs: same seed token, every later token is the reference token.
using NullSequence = ActualSequence;

// Unit token with empty content: (0, ..., 0, sqrt(3)/2, 1/2).
Vector reference_token(int d_x);

// Pads each raw token (d_x - 1 entries, norm <= sqrt(3)/2) to a unit token:
// the missing energy goes to the second-last coordinate, 1/2 is appended.
TrueSequence normalize_true(std::span<const Vector> raw);

// Accepted input scale: 0 < eps_x <= 1/L.
void check_eps_x(double eps_x, int L);

// x_1 = (0, 1); x_ell = (eps_x x*_ell, 0) for 2 <= ell <= L-1; x_L = (eps_x xbar, 0).
ActualSequence to_actual(const TrueSequence& xs, double eps_x);

NullSequence null_sequence(int L, int d_x, double eps_x);

// Token law for x*: uniform on {content norm sqrt(3)/2, last coordinate 1/2}
// or uniform over an explicit finite support.
struct TokenDistribution {
  std::vector<Vector> support;  // empty -> sphere slice

  Vector sample(int d_x, RngStream& rng) const;
};

TrueSequence sample_true_sequence(int L, int d_x, const TokenDistribution& dist, RngStream& rng);

}  // namespace rnnlab
