#include "rnnlab/loss.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rnnlab {

LossKind parse_loss(const std::string& name) {
  if (name == "centered-l2") return LossKind::CenteredL2;
  if (name == "cross-entropy") return LossKind::CrossEntropy;
  throw std::invalid_argument("unknown loss '" + name + "' (expected centered-l2 or cross-entropy)");
}

std::string loss_name(LossKind kind) {
  return kind == LossKind::CenteredL2 ? "centered-l2" : "cross-entropy";
}

LossValue loss_eval(LossKind kind, const Vector& v, const Label& y) {
  LossValue out;
  if (kind == LossKind::CenteredL2) {
    const auto* target = std::get_if<Vector>(&y);
    if (!target) throw std::invalid_argument("centered-l2 needs a vector label");
    if (target->size() != v.size()) throw std::invalid_argument("centered-l2: label dimension mismatch");
    const Vector diff = v - *target;
    const double dn = diff.norm();
    out.value = dn - target->norm();
    out.grad = dn > 0 ? Vector(diff / dn) : Vector(Vector::Zero(v.size()));
  } else {
    const auto* cls = std::get_if<int>(&y);
    if (!cls) throw std::invalid_argument("cross-entropy needs a class-index label");
    if (*cls < 0 || *cls >= v.size()) throw std::invalid_argument("cross-entropy: class index out of range");
    const double vmax = v.maxCoeff();
    const Vector e = (v.array() - vmax).exp().matrix();
    const double z = e.sum();
    const double lse = vmax + std::log(z);
    out.value = (lse - v[*cls] - std::log(static_cast<double>(v.size()))) / std::numbers::sqrt2;
    out.grad = e / z;
    out.grad[*cls] -= 1.0;
    out.grad /= std::numbers::sqrt2;
  }
  if (!std::isfinite(out.value)) throw std::runtime_error("loss_eval: non-finite loss");
  return out;
}

}  // namespace rnnlab
