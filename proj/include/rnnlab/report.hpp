#pragma once

#include <json.hpp>

#include <string>
#include <utility>
#include <vector>

namespace rnnlab {

// Log-log scaling fit over a grid; needs at least three points.
struct TrendResult {
  std::string name;
  std::vector<double> xs;
  std::vector<double> ys;
  double slope = 0.0;
  double intercept = 0.0;
  double ci_low = 0.0;   // 95% interval for the slope
  double ci_high = 0.0;

  static TrendResult fit(std::string name, std::vector<double> xs, std::vector<double> ys);
  nlohmann::ordered_json to_json() const;
};

struct LemmaReport {
  std::string lemma_id;
  int trials = 0;
  std::vector<std::pair<std::string, double>> statistics;
  std::string envelope;            // human-readable inequality
  double envelope_constant = 0.0;  // the frozen/fitted constant used
  bool pass = false;
  std::vector<std::pair<std::string, double>> config;
  std::vector<TrendResult> trends;
  std::vector<LemmaReport> items;  // sub-reports

  void set(const std::string& name, double value);
  double get(const std::string& name) const;
  void echo(const std::string& key, double value);

  nlohmann::ordered_json to_json() const;
};

}  // namespace rnnlab
