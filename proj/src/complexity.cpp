#include "rnnlab/complexity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace rnnlab {

namespace {

constexpr double kTermLimit = 1e300;

void check_finite(const std::vector<double>& c) {
  for (double v : c) {
    if (!std::isfinite(v)) throw std::invalid_argument("TaylorSeries: non-finite coefficient");
  }
}

// |c| * base^i, refusing anything above 1e300 (checked in log space so the
// guard itself cannot overflow).
double guarded_term(double abs_c, double base, int i, const char* which) {
  if (abs_c == 0.0 || base == 0.0) return (i == 0) ? abs_c : 0.0;
  const double log_term = std::log(abs_c) + std::log(base) * i;
  if (log_term > std::log(kTermLimit)) {
    throw std::overflow_error(std::string(which) + ": term of degree " + std::to_string(i) +
                              " exceeds 1e300");
  }
  return abs_c * std::pow(base, i);
}

}  // namespace

TaylorSeries::TaylorSeries(std::vector<double> coeffs) : c_(std::move(coeffs)) { check_finite(c_); }

TaylorSeries TaylorSeries::monomial(int degree, double scale) {
  if (degree < 0) throw std::invalid_argument("monomial: negative degree");
  std::vector<double> c(static_cast<std::size_t>(degree) + 1, 0.0);
  c.back() = scale;
  return TaylorSeries(std::move(c));
}

TaylorSeries TaylorSeries::sine(int degree) {
  if (degree < 0) throw std::invalid_argument("sine: negative degree");
  std::vector<double> c(static_cast<std::size_t>(degree) + 1, 0.0);
  double fact = 1.0;
  for (int i = 1; i <= degree; ++i) {
    fact *= i;
    if (i % 2 == 1) c[static_cast<std::size_t>(i)] = ((i / 2) % 2 == 0 ? 1.0 : -1.0) / fact;
  }
  return TaylorSeries(std::move(c));
}

TaylorSeries TaylorSeries::exp_minus_one(int degree) {
  if (degree < 0) throw std::invalid_argument("exp_minus_one: negative degree");
  std::vector<double> c(static_cast<std::size_t>(degree) + 1, 0.0);
  double fact = 1.0;
  for (int i = 1; i <= degree; ++i) {
    fact *= i;
    c[static_cast<std::size_t>(i)] = 1.0 / fact;
  }
  return TaylorSeries(std::move(c));
}

double TaylorSeries::coeff(int i) const {
  if (i < 0 || i > degree()) return 0.0;
  return c_[static_cast<std::size_t>(i)];
}

bool TaylorSeries::is_zero() const {
  return std::all_of(c_.begin(), c_.end(), [](double v) { return v == 0.0; });
}

double TaylorSeries::operator()(double z) const {
  double acc = 0.0;
  for (auto it = c_.rbegin(); it != c_.rend(); ++it) acc = acc * z + *it;
  return acc;
}

TaylorSeries TaylorSeries::scaled(double t) const {
  std::vector<double> c = c_;
  for (double& v : c) v *= t;
  return TaylorSeries(std::move(c));
}

TaylorSeries TaylorSeries::operator+(const TaylorSeries& other) const {
  std::vector<double> c(std::max(c_.size(), other.c_.size()), 0.0);
  for (std::size_t i = 0; i < c_.size(); ++i) c[i] += c_[i];
  for (std::size_t i = 0; i < other.c_.size(); ++i) c[i] += other.c_[i];
  return TaylorSeries(std::move(c));
}

int truncation_degree(double eps, double constant) {
  if (!(eps > 0 && eps < 1)) throw std::invalid_argument("truncation_degree: eps must lie in (0,1)");
  return std::max(1, static_cast<int>(std::ceil(constant * std::log(1.0 / eps))));
}

TaylorSeries parse_series(const std::string& spec, double eps) {
  auto head = spec.substr(0, spec.find(':'));
  const std::string tail = spec.find(':') == std::string::npos ? "" : spec.substr(spec.find(':') + 1);
  auto degree_or_default = [&]() {
    if (tail.empty()) return truncation_degree(eps);
    return std::stoi(tail);
  };
  if (spec == "zero" || spec == "0") return TaylorSeries::zero();
  if (head == "sin") return TaylorSeries::sine(degree_or_default());
  if (head == "exp1") return TaylorSeries::exp_minus_one(degree_or_default());
  if (spec.rfind("z^", 0) == 0) return TaylorSeries::monomial(std::stoi(spec.substr(2)));
  if (spec == "z") return TaylorSeries::monomial(1);
  if (head == "poly") {
    std::vector<double> c;
    std::stringstream ss(tail);
    std::string item;
    while (std::getline(ss, item, ',')) c.push_back(std::stod(item));
    if (c.empty()) throw std::invalid_argument("parse_series: empty coefficient list");
    return TaylorSeries(std::move(c));
  }
  throw std::invalid_argument("parse_series: unknown series '" + spec +
                              "' (expected zero, z, z^d, poly:c0,c1,..., sin[:K], exp1[:K])");
}

std::string describe_series(const TaylorSeries& phi) {
  std::ostringstream os;
  os.precision(17);
  os << "poly:";
  for (std::size_t i = 0; i < phi.coeffs().size(); ++i) os << (i ? "," : "") << phi.coeffs()[i];
  return os.str();
}

double complexity_sound(const TaylorSeries& phi, double R, double c_star) {
  if (!(R >= 0)) throw std::invalid_argument("complexity_sound: R must be nonnegative");
  double total = 0.0;
  for (int i = 0; i <= phi.degree(); ++i) {
    const double c = std::abs(phi.coeff(i));
    if (c == 0.0) continue;
    total += guarded_term(c_star * std::pow(i + 1.0, 1.75) * c, R, i, "complexity_sound");
  }
  if (!std::isfinite(total) || total > kTermLimit) throw std::overflow_error("complexity_sound: sum exceeds 1e300");
  return total;
}

double complexity_eps(const TaylorSeries& phi, double R, double eps, double c_star) {
  if (!(R >= 0)) throw std::invalid_argument("complexity_eps: R must be nonnegative");
  if (!(eps > 0 && eps < 1)) throw std::invalid_argument("complexity_eps: eps must lie in (0,1)");
  const double L1 = std::log(1.0 / eps);
  double total = 0.0;
  for (int i = 0; i <= phi.degree(); ++i) {
    const double c = std::abs(phi.coeff(i));
    if (c == 0.0) continue;
    if (i == 0) {
      total += 2.0 * c;
      continue;
    }
    if (R == 0.0) continue;
    const double base1 = c_star * R;
    const double base2 = std::sqrt(L1 / i) * c_star * R;
    total += guarded_term(c, base1, i, "complexity_eps");
    total += guarded_term(c, base2, i, "complexity_eps");
  }
  if (!std::isfinite(total) || total > kTermLimit) throw std::overflow_error("complexity_eps: sum exceeds 1e300");
  return total;
}

ComplexityBudget complexity_budget(const TaylorSeries& phi, double R, double eps, double c_star) {
  return ComplexityBudget{complexity_sound(phi, R, c_star), complexity_eps(phi, R, eps, c_star), R, eps,
                          c_star};
}

}  // namespace rnnlab
