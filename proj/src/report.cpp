#include "rnnlab/report.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <stdexcept>

#include "rnnlab/numerics.hpp"

namespace rnnlab {

namespace {

// JSON has no inf/nan; keep reports parseable.
nlohmann::ordered_json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

}  // namespace

TrendResult TrendResult::fit(std::string name, std::vector<double> xs, std::vector<double> ys) {
  if (xs.size() < 3) throw std::invalid_argument("TrendResult: at least three grid points are required");
  TrendResult t;
  t.name = std::move(name);
  const LogLogFit f = fit_loglog(xs, ys);
  t.xs = std::move(xs);
  t.ys = std::move(ys);
  t.slope = f.slope;
  t.intercept = f.intercept;
  const boost::math::students_t dist(static_cast<double>(t.xs.size() - 2));
  const double q = boost::math::quantile(boost::math::complement(dist, 0.025));
  t.ci_low = f.slope - q * f.slope_stderr;
  t.ci_high = f.slope + q * f.slope_stderr;
  return t;
}

nlohmann::ordered_json TrendResult::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["x"] = xs;
  auto yj = nlohmann::ordered_json::array();
  for (double y : ys) yj.push_back(number(y));
  j["y"] = yj;
  j["slope"] = number(slope);
  j["slope_ci"] = {number(ci_low), number(ci_high)};
  return j;
}

void LemmaReport::set(const std::string& name, double value) {
  for (auto& [k, v] : statistics) {
    if (k == name) {
      v = value;
      return;
    }
  }
  statistics.emplace_back(name, value);
}

double LemmaReport::get(const std::string& name) const {
  for (const auto& [k, v] : statistics) {
    if (k == name) return v;
  }
  throw std::out_of_range("LemmaReport: no statistic '" + name + "'");
}

void LemmaReport::echo(const std::string& key, double value) {
  for (auto& [k, v] : config) {
    if (k == key) {
      v = value;
      return;
    }
  }
  config.emplace_back(key, value);
}

nlohmann::ordered_json LemmaReport::to_json() const {
  nlohmann::ordered_json j;
  j["lemma_id"] = lemma_id;
  j["pass"] = pass;
  j["trials"] = trials;
  nlohmann::ordered_json stats = nlohmann::ordered_json::object();
  for (const auto& [k, v] : statistics) stats[k] = number(v);
  j["statistics"] = stats;
  j["envelope"] = {{"formula", envelope}, {"constant", number(envelope_constant)}};
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config) cfg[k] = number(v);
  j["config"] = cfg;
  if (!trends.empty()) {
    auto tj = nlohmann::ordered_json::array();
    for (const auto& t : trends) tj.push_back(t.to_json());
    j["trends"] = tj;
  }
  if (!items.empty()) {
    auto ij = nlohmann::ordered_json::array();
    for (const auto& it : items) ij.push_back(it.to_json());
    j["items"] = ij;
  }
  return j;
}

}  // namespace rnnlab
