#pragma once

#include "rnnlab/concept.hpp"
#include "rnnlab/lemma_lab.hpp"
#include "rnnlab/sgd.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace rnnlab {

// git-describe style, fixed at build time.
const char* version_string();

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// INI file, e.g.
//
//   [dims]
//   m = 2048
//   L = 4
//   ...
//   [sweep]
//   m = 1024, 4096
//
// See configs/ for complete examples.
struct ExperimentConfig {
  Dims dims{2048, 4, 2, 4};
  int p = 1;
  double eps = 0.2;
  double eps_x = 0.25;
  std::string phi = "z^1";         // used when no concept file is given
  std::string concept_path;        // resolved relative to the config file
  LossKind loss = LossKind::CenteredL2;
  double label_noise = 0.0;
  int n_train = 512;
  int n_test = 512;
  HyperOverrides hyper;
  long eval_every = 250;
  long snapshot_every = 0;
  std::vector<int> m_grid;         // sweep; empty means {dims.m}
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir;          // empty: no files
  int threads = 0;                 // 0: LAB_THREADS
  LemmaConfig lemma;

  nlohmann::ordered_json echo() const;
};

ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

struct Theorem1Row {
  int m = 0;
  std::uint64_t seed = 0;
  HyperParams hp;
  double opt_train = 0.0;
  double opt_test = 0.0;
  double best_train_risk = 0.0;
  long best_step = 0;
  double best_test_risk = 0.0;  // held-out risk at the best-train evaluation point
  double final_train_risk = 0.0;
  double final_test_risk = 0.0;
  double frobenius_norm = 0.0;
  std::uint64_t trajectory_hash = 0;
  bool train_ok = false;  // best train risk <= OPT + eps
  bool test_ok = false;   // held-out risk <= OPT + 1.5 eps
  std::string error;      // non-empty if the stage failed

  nlohmann::ordered_json to_json() const;
};

struct Theorem1Summary {
  std::vector<Theorem1Row> rows;
  bool dry_run = false;
  bool pass = false;  // no failed stage and train_ok on every row

  nlohmann::ordered_json to_json(const ExperimentConfig& cfg) const;
};

// sample concept -> datasets -> hyperparameters -> train -> risks, for every
// (m, seed) sweep point. With an output directory, each point writes its
// curve CSV and the summary is written as summary.json; rows of failed
// points carry the error and the remaining points still run.
Theorem1Summary run_theorem1(const ExperimentConfig& cfg, bool dry_run = false, std::ostream* log = nullptr);

// The concept used by a sweep point: from the concept file, or random with
// the configured series.
TargetFunction theorem1_target(const ExperimentConfig& cfg, std::uint64_t seed);

struct SuiteResult {
  std::vector<LemmaReport> reports;
  bool pass = false;
};

// Runs the selected checks in lemma_ids() order (empty filter: all) and
// writes one JSON line per report, each with the version and config echo.
SuiteResult run_lemma_suite(const LemmaConfig& cfg, const std::vector<std::string>& filter,
                            std::ostream* jsonl = nullptr);

nlohmann::ordered_json lemma_config_echo(const LemmaConfig& cfg);

}  // namespace rnnlab
