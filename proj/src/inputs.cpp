#include "rnnlab/inputs.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rnnlab {

namespace {
constexpr double kHalfSqrt3 = 0.86602540378443864676;
}

Vector reference_token(int d_x) {
  if (d_x < 2) throw std::invalid_argument("reference_token: d_x must be at least 2");
  Vector x = Vector::Zero(d_x);
  x[d_x - 2] = kHalfSqrt3;
  x[d_x - 1] = 0.5;
  return x;
}

TrueSequence normalize_true(std::span<const Vector> raw) {
  TrueSequence out;
  if (raw.empty()) return out;
  const auto content = raw.front().size();
  if (content < 1) throw std::invalid_argument("normalize_true: tokens need at least one entry");
  for (const auto& r : raw) {
    if (r.size() != content) throw std::invalid_argument("normalize_true: ragged tokens");
    if (!r.allFinite()) throw std::invalid_argument("normalize_true: non-finite token");
    const double n2 = r.squaredNorm();
    if (n2 > 0.75 * (1.0 + 1e-12)) {
      throw std::invalid_argument("normalize_true: token norm " + std::to_string(std::sqrt(n2)) +
                                  " exceeds sqrt(3)/2");
    }
    Vector x(content + 1);
    x.head(content) = r;
    // Put the missing energy into the second-last coordinate, keeping its sign.
    const double s = r[content - 1];
    const double padded = std::sqrt(std::max(0.0, s * s + 0.75 - n2));
    x[content - 1] = std::signbit(s) ? -padded : padded;
    x[content] = 0.5;
    out.tokens.push_back(std::move(x));
  }
  return out;
}

void check_eps_x(double eps_x, int L) {
  if (L < 3) throw std::invalid_argument("sequence length L must be at least 3");
  if (!(eps_x > 0.0) || eps_x > 1.0 / L) {
    throw std::invalid_argument("eps_x = " + std::to_string(eps_x) + " outside (0, 1/L] for L = " +
                                std::to_string(L));
  }
}

ActualSequence to_actual(const TrueSequence& xs, double eps_x) {
  const int L = xs.L();
  check_eps_x(eps_x, L);
  const int d_x = xs.d_x();
  if (d_x < 2) throw std::invalid_argument("to_actual: empty or too narrow true sequence");
  ActualSequence x;
  x.eps_x = eps_x;
  x.tokens.reserve(static_cast<std::size_t>(L));
  Vector seed = Vector::Zero(d_x + 1);
  seed[d_x] = 1.0;
  x.tokens.push_back(seed);
  for (const auto& t : xs.tokens) {
    if (t.size() != d_x) throw std::invalid_argument("to_actual: ragged true sequence");
    Vector v = Vector::Zero(d_x + 1);
    v.head(d_x) = eps_x * t;
    x.tokens.push_back(std::move(v));
  }
  Vector last = Vector::Zero(d_x + 1);
  last.head(d_x) = eps_x * reference_token(d_x);
  x.tokens.push_back(std::move(last));
  return x;
}

NullSequence null_sequence(int L, int d_x, double eps_x) {
  check_eps_x(eps_x, L);
  TrueSequence xs;
  xs.tokens.assign(static_cast<std::size_t>(L - 2), reference_token(d_x));
  return to_actual(xs, eps_x);
}

Vector TokenDistribution::sample(int d_x, RngStream& rng) const {
  if (!support.empty()) {
    const Vector& t = support[rng.index(support.size())];
    if (t.size() != d_x) throw std::invalid_argument("TokenDistribution: support token has wrong dimension");
    return t;
  }
  if (d_x < 2) throw std::invalid_argument("TokenDistribution: d_x must be at least 2");
  Vector x(d_x);
  x.head(d_x - 1) = kHalfSqrt3 * random_unit_vector(d_x - 1, rng);
  x[d_x - 1] = 0.5;
  return x;
}

TrueSequence sample_true_sequence(int L, int d_x, const TokenDistribution& dist, RngStream& rng) {
  if (L < 3) throw std::invalid_argument("sample_true_sequence: L must be at least 3");
  TrueSequence xs;
  xs.tokens.reserve(static_cast<std::size_t>(L - 2));
  for (int ell = 2; ell <= L - 1; ++ell) xs.tokens.push_back(dist.sample(d_x, rng));
  return xs;
}

}  // namespace rnnlab
