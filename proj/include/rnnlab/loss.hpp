#pragma once

#include "rnnlab/numerics.hpp"

#include <string>
#include <variant>

namespace rnnlab {

// Regression target in R^d, or a class index in [0, d).
using Label = std::variant<Vector, int>;

enum class LossKind { CenteredL2, CrossEntropy };

LossKind parse_loss(const std::string& name);
std::string loss_name(LossKind kind);

struct LossValue {
  double value = 0.0;
  Vector grad;  // a subgradient in v
};

// centered-l2:   G(v,y) = ||v - y|| - ||y||
// cross-entropy: G(v,c) = (logsumexp(v) - v_c - log d) / sqrt(2)
// Both are convex, 1-Lipschitz in v and vanish at v = 0.
LossValue loss_eval(LossKind kind, const Vector& v, const Label& y);

}  // namespace rnnlab
