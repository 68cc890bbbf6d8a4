#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rnnlab/experiment.hpp"

using namespace rnnlab;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"(
[dims]
m = 32
L = 4
d = 2
d_x = 3

[data]
n_train = 8
n_test = 8

[train]
eps = 0.2
eps_x = 0.25
lambda = 1
eta = 0.001
T = 40
eval_every = 10

[sweep]
m = 32, 48
seeds = 1, 2
)";

ExperimentConfig parse(const std::string& text, const fs::path& base = {}) {
  std::istringstream in(text);
  return parse_config(in, base);
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("rnnlab_exp_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Config, ParsesSectionsAndLists) {
  const auto c = parse(kSmall);
  EXPECT_EQ(c.dims.m, 32);
  EXPECT_EQ(c.dims.L, 4);
  EXPECT_EQ(c.dims.d_x, 3);
  EXPECT_EQ(c.n_train, 8);
  EXPECT_EQ(c.hyper.lambda.value(), 1.0);
  EXPECT_EQ(c.hyper.T.value(), 40);
  EXPECT_EQ(c.m_grid, (std::vector<int>{32, 48}));
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2}));
  EXPECT_FALSE(c.hyper.eta == std::nullopt);
  const auto j = c.echo();
  EXPECT_TRUE(j.contains("dims"));
}

TEST(Config, ShippedConfigsLoad) {
  for (const char* name : {"toy.ini", "sweep.ini", "lemmas.ini"}) {
    EXPECT_NO_THROW(load_config(fs::path(RNNLAB_SOURCE_DIR) / "configs" / name)) << name;
  }
}

TEST(Config, UnknownKeyNamesTheKey) {
  try {
    parse(std::string(kSmall) + "\n[run]\nmomentum = 0.9\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("run.momentum"), std::string::npos);
  }
}

TEST(Config, RangeAndPathErrors) {
  EXPECT_THROW(parse("[train]\neps_x = 0.5\n"), ConfigError);  // > 1/L for L = 4
  EXPECT_THROW(parse("[dims]\nL = 2\n"), ConfigError);
  EXPECT_THROW(parse("[train]\nloss = hinge\n"), ConfigError);
  EXPECT_THROW(parse("[envelopes]\nno.such = 1\n"), ConfigError);
  EXPECT_THROW(parse("[target]\nconcept = missing.concept\n", "/nonexistent"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.ini"), ConfigError);
}

TEST(Config, EnvelopeOverridesAndRelativePaths) {
  const auto c = parse("[envelopes]\nzeta.se = 4\n[run]\noutput = out\n", "/base/dir");
  EXPECT_EQ(c.lemma.envelope("zeta.se"), 4.0);
  EXPECT_EQ(c.output_dir, "/base/dir/out");
}

TEST(Theorem1, DryRunDerivesHyperparametersAndWritesNothing) {
  const fs::path dir = scratch("dry");
  auto c = parse(kSmall);
  c.output_dir = dir.string();
  const auto s = run_theorem1(c, true);
  EXPECT_TRUE(s.dry_run);
  ASSERT_EQ(s.rows.size(), 4u);
  for (const auto& r : s.rows) {
    EXPECT_EQ(r.hp.lambda, 1.0);
    EXPECT_EQ(r.hp.T, 40);
    EXPECT_TRUE(r.error.empty());
  }
  EXPECT_FALSE(fs::exists(dir));
}

TEST(Theorem1, SweepIsDeterministicAndWritesArtifacts) {
  const fs::path dir = scratch("sweep");
  auto c = parse(kSmall);
  c.output_dir = dir.string();
  const auto a = run_theorem1(c);
  c.output_dir.clear();
  const auto b = run_theorem1(c);
  ASSERT_EQ(a.rows.size(), 4u);
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    EXPECT_TRUE(a.rows[k].error.empty()) << a.rows[k].error;
    EXPECT_EQ(a.rows[k].trajectory_hash, b.rows[k].trajectory_hash);
    EXPECT_EQ(a.rows[k].best_train_risk, b.rows[k].best_train_risk);
  }
  // different seeds give different trajectories
  EXPECT_NE(a.rows[0].trajectory_hash, a.rows[1].trajectory_hash);

  std::ifstream csv(dir / "curve_m32_seed1.csv");
  ASSERT_TRUE(csv.good());
  std::string first;
  std::getline(csv, first);
  EXPECT_EQ(first.rfind("# version", 0), 0u);
  std::ifstream js(dir / "summary.json");
  ASSERT_TRUE(js.good());
  const auto j = nlohmann::json::parse(js);
  EXPECT_EQ(j["rows"].size(), 4u);
  EXPECT_TRUE(j.contains("version"));
  fs::remove_all(dir);
}

TEST(Theorem1, FailedPointIsReportedAndOthersRun) {
  auto c = parse(kSmall);
  c.hyper.eta = 1e200;
  const auto s = run_theorem1(c);
  ASSERT_EQ(s.rows.size(), 4u);
  EXPECT_FALSE(s.pass);
  for (const auto& r : s.rows) EXPECT_FALSE(r.error.empty());
}

TEST(Theorem1, TargetFromConceptFile) {
  const fs::path dir = scratch("concept");
  fs::create_directories(dir);
  RngStream rng(3, 3);
  {
    std::ofstream out(dir / "f.concept");
    write_concept(out, random_target(4, 3, 2, 1, TaylorSeries::monomial(1), rng));
  }
  const auto c = parse(std::string(kSmall) + "\n[target]\nconcept = f.concept\n", dir);
  const auto F1 = theorem1_target(c, 1), F2 = theorem1_target(c, 2);
  EXPECT_EQ(F1.terms().size(), F2.terms().size());
  for (const auto& [k, t] : F1.terms()) EXPECT_EQ(F2.terms().at(k).wstar, t.wstar);
  fs::remove_all(dir);
}

TEST(LemmaSuite, FilterRunsInCanonicalOrderAndWritesJsonLines) {
  LemmaConfig cfg;
  cfg.mc_samples = 20000;
  cfg.sign_instances = 50;
  std::ostringstream out;
  const auto r = run_lemma_suite(cfg, {"sign_change", "zeta_c"}, &out);
  ASSERT_EQ(r.reports.size(), 2u);
  EXPECT_EQ(r.reports[0].lemma_id, "zeta_c");
  EXPECT_EQ(r.reports[1].lemma_id, "sign_change");
  std::istringstream lines(out.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("version"));
    EXPECT_TRUE(j.contains("config"));
    EXPECT_EQ(j["report"]["lemma_id"], r.reports[n].lemma_id);
    ++n;
  }
  EXPECT_EQ(n, 2);
  EXPECT_THROW(run_lemma_suite(cfg, {"zeta_c", "bogus"}), std::invalid_argument);
}

TEST(LemmaSuite, FaultInjectionFailsTheSuite) {
  LemmaConfig cfg;
  cfg.mc_samples = 20000;
  cfg.envelope_overrides["zeta.se"] = 0.0;
  EXPECT_FALSE(run_lemma_suite(cfg, {"zeta_c"}).pass);
}
