#pragma once

#include <string>
#include <vector>

namespace rnnlab {

inline constexpr double kDefaultCStar = 1e4;

// phi(z) = sum_{i=0}^{K} c_i z^i
class TaylorSeries {
 public:
  TaylorSeries() = default;
  explicit TaylorSeries(std::vector<double> coeffs);

  static TaylorSeries zero() { return TaylorSeries{}; }
  static TaylorSeries monomial(int degree, double scale = 1.0);
  static TaylorSeries sine(int degree);           // sin z truncated at degree
  static TaylorSeries exp_minus_one(int degree);  // e^z - 1 truncated at degree

  const std::vector<double>& coeffs() const { return c_; }
  double coeff(int i) const;
  // Highest index with a stored coefficient (-1 for the empty series).
  int degree() const { return static_cast<int>(c_.size()) - 1; }
  bool is_zero() const;

  double operator()(double z) const;
  TaylorSeries scaled(double t) const;
  TaylorSeries operator+(const TaylorSeries& other) const;
  bool operator==(const TaylorSeries& other) const = default;

 private:
  std::vector<double> c_;
};

// Degree rule for transcendental targets: ceil(constant * log(1/eps)).
int truncation_degree(double eps, double constant = 1.0);

// "zero", "z^d", "poly:c0,c1,...", "sin[:K]", "exp1[:K]". Transcendental
// specs without an explicit K use truncation_degree(eps).
TaylorSeries parse_series(const std::string& spec, double eps);
std::string describe_series(const TaylorSeries& phi);

// c_s(phi,R) = C* sum_i (i+1)^{1.75} R^i |c_i|
double complexity_sound(const TaylorSeries& phi, double R, double c_star = kDefaultCStar);

// c_eps(phi,R) = sum_i [ (C* R)^i + (sqrt(log(1/eps)/i) C* R)^i ] |c_i|,
// with both bracketed powers equal to 1 at i = 0.
double complexity_eps(const TaylorSeries& phi, double R, double eps, double c_star = kDefaultCStar);

struct ComplexityBudget {
  double c_sound = 0.0;
  double c_eps = 0.0;
  double R = 0.0;
  double eps = 0.0;
  double c_star = kDefaultCStar;
};

ComplexityBudget complexity_budget(const TaylorSeries& phi, double R, double eps,
                                   double c_star = kDefaultCStar);

}  // namespace rnnlab
