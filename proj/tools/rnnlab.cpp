// rnnlab: command-line front end. Exit codes: 0 pass, 1 check failure,
// 2 usage or configuration error.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <memory>

#include "rnnlab/complexity.hpp"
#include "rnnlab/concept.hpp"
#include "rnnlab/experiment.hpp"
#include "rnnlab/fitting.hpp"
#include "rnnlab/generalization.hpp"
#include "rnnlab/lemma_lab.hpp"
#include "rnnlab/sgd.hpp"

using namespace rnnlab;
using json = nlohmann::ordered_json;

namespace {

constexpr int kPass = 0;
constexpr int kFail = 1;
constexpr int kUsage = 2;

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// "-" means stdout.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_ = std::make_unique<std::ofstream>(path);
    if (!*file_) throw UsageError("cannot open '" + path + "' for writing");
  }
  std::ostream& get() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

// ---------------------------------------------------------------------------

struct ComplexityArgs {
  std::string phi = "z^1";
  double R = 1.0;
  double eps = 0.1;
  double c_star = kDefaultCStar;
};

int cmd_complexity(const ComplexityArgs& a) {
  const TaylorSeries phi = parse_series(a.phi, a.eps);
  const ComplexityBudget b = complexity_budget(phi, a.R, a.eps, a.c_star);
  json j;
  j["version"] = version_string();
  j["phi"] = a.phi;
  j["series"] = describe_series(phi);
  j["R"] = a.R;
  j["eps"] = a.eps;
  j["c_star"] = a.c_star;
  j["c_sound"] = b.c_sound;
  j["c_eps"] = b.c_eps;
  std::cout << j.dump(2) << '\n';
  return kPass;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string csv = "-";
  std::string json_out;
  int m = 0;
  long seed = -1;
};

int cmd_train(const TrainArgs& a) {
  ExperimentConfig cfg = load_config(a.config);
  if (a.m > 0) cfg.dims.m = a.m;
  const std::uint64_t seed = a.seed >= 0 ? static_cast<std::uint64_t>(a.seed) : cfg.seeds.front();
  const TargetFunction F = theorem1_target(cfg, seed);
  RngStream init_rng(seed, 12), train_rng(seed, 13), test_rng(seed, 14), sgd_rng(seed, 15);
  const NetworkParams params = init_random(cfg.dims, init_rng);
  const LabelNoise noise{cfg.label_noise};
  const Dataset train_set = sample_dataset(F, cfg.n_train, train_rng, noise, cfg.loss);
  const Dataset test_set = sample_dataset(F, cfg.n_test, test_rng, noise, cfg.loss);
  const HyperParams hp = derive_hyperparams(concept_complexity(F, cfg.eps), cfg.dims, cfg.eps, cfg.eps_x, cfg.hyper);

  Output csv(a.csv);
  csv.get() << "# version " << version_string() << "\n# config " << cfg.echo().dump() << "\n# seed " << seed
            << '\n';
  csv.get().precision(10);
  write_curve_header(csv.get());
  TrainOptions opts;
  opts.eval_every = cfg.eval_every;
  opts.heldout = &test_set.samples;
  opts.csv = &csv.get();
  if (!cfg.output_dir.empty()) {
    opts.snapshot_dir = cfg.output_dir;
    opts.snapshot_every = cfg.snapshot_every;
  }
  json j;
  j["version"] = version_string();
  j["config"] = cfg.echo();
  j["seed"] = seed;
  j["hyperparameters"] = {{"lambda", hp.lambda}, {"eta", hp.eta}, {"T", hp.T}, {"rho", hp.rho},
                          {"varrho", hp.varrho}, {"Delta_cap", hp.Delta_cap}, {"overridden", hp.overridden},
                          {"warnings", hp.warnings}};
  j["opt_train"] = train_set.opt_estimate;
  j["opt_test"] = test_set.opt_estimate;
  int code = kPass;
  try {
    const TrainResult r = train(params, train_set, hp, sgd_rng, opts);
    j["steps"] = r.steps;
    j["best"] = {{"step", r.best.step}, {"empirical_risk", r.best.empirical_risk}, {"heldout_risk", r.best.heldout_risk}};
    j["final"] = {{"empirical_risk", r.curve.back().empirical_risk}, {"heldout_risk", r.curve.back().heldout_risk},
                  {"frobenius_norm", r.curve.back().frobenius_norm}};
    j["average_risk"] = r.average_risk;
    j["max_step_norm"] = r.max_step_norm;
    j["delta_cap_exceeded"] = r.delta_cap_exceeded;
    std::ostringstream h;
    h << std::hex << r.trajectory_hash;
    j["trajectory_hash"] = h.str();
  } catch (const TrainingError& e) {
    j["error"] = e.what();
    j["failed_step"] = e.step();
    code = kFail;
  }
  Output out(a.json_out);
  out.get() << j.dump(2) << '\n';
  return code;
}

// ---------------------------------------------------------------------------

struct VerifyArgs {
  std::vector<std::string> ids;
  std::string config;
  int m = 0;
  std::vector<int> m_grid;
  std::vector<double> grid;
  long seed = -1;
  int trials = 0;
  int heavy_trials = 0;
  double eps_x = 0.0;
  std::vector<std::string> envelopes;
  std::string json_out;
};

int cmd_verify(const VerifyArgs& a) {
  LemmaConfig cfg = a.config.empty() ? LemmaConfig{} : load_config(a.config).lemma;
  if (a.m > 0) cfg.dims.m = a.m;
  if (!a.m_grid.empty()) cfg.m_grid = cfg.coupling_m_grid = a.m_grid;
  if (!a.grid.empty()) {
    // Interpreted by the selected check: Delta, N or beta.
    cfg.delta_grid = cfg.coupling_delta_grid = cfg.beta_grid = a.grid;
    cfg.n_grid.assign(a.grid.begin(), a.grid.end());
  }
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  if (a.trials > 0) cfg.trials = a.trials;
  if (a.heavy_trials > 0) cfg.heavy_trials = a.heavy_trials;
  if (a.eps_x > 0) cfg.eps_x = a.eps_x;
  for (const auto& kv : a.envelopes) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--envelope expects name=value, got '" + kv + "'");
    const std::string name = kv.substr(0, eq);
    if (!frozen_envelopes().contains(name)) throw UsageError("unknown envelope constant '" + name + "'");
    cfg.envelope_overrides[name] = std::stod(kv.substr(eq + 1));
  }
  std::vector<std::string> filter;
  for (const auto& id : a.ids) {
    if (id != "all") filter.push_back(id);
  }
  Output out(a.json_out);
  SuiteResult res;
  try {
    res = run_lemma_suite(cfg, filter, &out.get());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  for (const auto& r : res.reports) {
    std::cerr << (r.pass ? "PASS " : "FAIL ") << r.lemma_id << '\n';
    for (const auto& c : r.items) std::cerr << "  " << (c.pass ? "pass " : "fail ") << c.lemma_id << '\n';
  }
  return res.pass ? kPass : kFail;
}

// ---------------------------------------------------------------------------

struct RademacherArgs {
  std::string mode = "linear";
  int n = 256;
  int dim = 16;
  double B = 1.0;
  int draws = 200;
  long seed = 1;
  int m = 1024;
  int L = 4;
  int d = 2;
  int d_x = 4;
  double delta = 1.0;
  double eps_x = 0.25;
};

int cmd_rademacher(const RademacherArgs& a) {
  RngStream rng(static_cast<std::uint64_t>(a.seed), 0);
  json j;
  j["version"] = version_string();
  j["mode"] = a.mode;
  j["seed"] = a.seed;
  if (a.mode == "linear") {
    std::vector<Vector> xs;
    for (int i = 0; i < a.n; ++i) xs.push_back(random_unit_vector(a.dim, rng));
    j["config"] = {{"n", a.n}, {"dim", a.dim}, {"B", a.B}, {"draws", a.draws}};
    j["estimate"] = rademacher_linear(xs, a.B, a.draws, rng).to_json();
  } else if (a.mode == "rnn") {
    const Dims dims{a.m, a.d_x, a.d, a.L};
    const NetworkParams params = init_random(dims, rng);
    std::vector<ActualSequence> xs;
    for (int i = 0; i < a.n; ++i) {
      xs.push_back(to_actual(sample_true_sequence(a.L, a.d_x, TokenDistribution{}, rng), a.eps_x));
    }
    j["config"] = {{"n", a.n}, {"m", a.m}, {"L", a.L}, {"d", a.d}, {"d_x", a.d_x}, {"Delta", a.delta},
                   {"eps_x", a.eps_x}, {"draws", a.draws}};
    j["estimate"] = rademacher_rnn_linearized(params, xs, a.delta, a.draws, rng).to_json();
  } else {
    throw UsageError("--mode must be linear or rnn");
  }
  std::cout << j.dump(2) << '\n';
  return kPass;
}

// ---------------------------------------------------------------------------

struct ExistenceArgs {
  int m = 1024;
  int L = 4;
  int d = 2;
  int d_x = 4;
  int p = 1;
  std::string phi = "z^1";
  std::string concept_path;
  double eps_e = 0.1;
  double eps_x = 0.25;
  double target = 0.0;
  double c_star = kDefaultCStar;
  double eps_c = 0.0;
  long seed = 1;
  std::string dump_trace;
  bool full = false;
};

int cmd_existence(const ExistenceArgs& a) {
  const std::uint64_t seed = static_cast<std::uint64_t>(a.seed);
  RngStream rng(seed, 0);
  const Dims dims{a.m, a.d_x, a.d, a.L};
  TargetFunction F = a.concept_path.empty()
                         ? random_target(a.L, a.d_x, a.d, a.p, parse_series(a.phi, a.eps_e), rng)
                         : load_concept(a.concept_path);
  if (F.L() != a.L || F.d() != a.d || F.d_x() != a.d_x) throw UsageError("concept dimensions do not match --L/--d/--dx");
  const NetworkParams params = init_random(dims, rng);
  const ForwardTrace null_trace = forward(params, null_sequence(a.L, a.d_x, a.eps_x));
  WStarOptions opts;
  opts.c_star = opts.fit.c_star = a.c_star;
  opts.eps_c = a.eps_c;
  const WStarBundle wsb = build_w_star(params, F, null_trace, a.eps_e, a.eps_x, rng, opts);
  const TrueSequence xstar = sample_true_sequence(a.L, a.d_x, TokenDistribution{}, rng);
  const double target = a.target > 0 ? a.target : a.eps_e;
  const LemmaReport rep = verify_existence(params, wsb, F, xstar, target);
  if (!a.dump_trace.empty()) {
    Output t(a.dump_trace);
    dump_trace(t.get(), forward(params, to_actual(xstar, a.eps_x)), a.full);
  }
  json j;
  j["version"] = version_string();
  j["seed"] = a.seed;
  j["report"] = rep.to_json();
  j["w_star"] = wsb.report();
  std::cout << j.dump(2) << '\n';
  return rep.pass ? kPass : kFail;
}

// ---------------------------------------------------------------------------

struct Theorem1Args {
  std::string config;
  bool dry_run = false;
};

int cmd_theorem1(const Theorem1Args& a) {
  const ExperimentConfig cfg = load_config(a.config);
  const Theorem1Summary s = run_theorem1(cfg, a.dry_run, a.dry_run ? nullptr : &std::cerr);
  std::cout << s.to_json(cfg).dump(2) << '\n';
  return s.pass ? kPass : kFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical lab for over-parameterized Elman ReLU networks"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  ComplexityArgs ca;
  auto* complexity = app.add_subcommand("complexity", "Function complexity of a Taylor series");
  complexity->add_option("--phi", ca.phi, "Series: zero, z^d, poly:c0,c1,..., sin[:K], exp1[:K]");
  complexity->add_option("--r", ca.R, "Radius R")->check(CLI::PositiveNumber);
  complexity->add_option("--eps", ca.eps, "Accuracy eps")->check(CLI::Range(0.0, 1.0));
  complexity->add_option("--c-star", ca.c_star, "Constant C*")->check(CLI::PositiveNumber);

  TrainArgs ta;
  auto* trainc = app.add_subcommand("train", "Single SGD run from a config file");
  trainc->add_option("--config", ta.config, "INI config")->required()->check(CLI::ExistingFile);
  trainc->add_option("--csv", ta.csv, "Risk curve CSV ('-' for stdout)");
  trainc->add_option("--json", ta.json_out, "Summary JSON (default stdout)");
  trainc->add_option("--m", ta.m, "Override [dims] m");
  trainc->add_option("--seed", ta.seed, "Override the seed");

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "Monte Carlo checks of the random-network properties");
  verify->add_option("ids", va.ids, "Check ids, or 'all'")->required();
  verify->add_option("--config", va.config, "INI config ([lemma] and [envelopes] sections)")->check(CLI::ExistingFile);
  verify->add_option("--m", va.m, "Width");
  verify->add_option("--m-grid", va.m_grid, "Width grid")->delimiter(',');
  verify->add_option("--grid", va.grid, "Delta, N or beta grid")->delimiter(',');
  verify->add_option("--seed", va.seed, "Seed");
  verify->add_option("--trials", va.trials, "Cheap trials");
  verify->add_option("--heavy-trials", va.heavy_trials, "Heavy trials");
  verify->add_option("--eps-x", va.eps_x, "Input scale");
  verify->add_option("--envelope", va.envelopes, "Override an envelope constant, name=value");
  verify->add_option("--json", va.json_out, "JSON-lines output (default stdout)");

  RademacherArgs ra;
  auto* rad = app.add_subcommand("rademacher", "Empirical Rademacher complexity");
  rad->add_option("--mode", ra.mode, "linear or rnn")->check(CLI::IsMember({"linear", "rnn"}));
  rad->add_option("--n", ra.n, "Number of samples")->check(CLI::PositiveNumber);
  rad->add_option("--dim", ra.dim, "Dimension (linear)")->check(CLI::PositiveNumber);
  rad->add_option("--B", ra.B, "Norm bound (linear)")->check(CLI::PositiveNumber);
  rad->add_option("--draws", ra.draws, "Sign draws")->check(CLI::PositiveNumber);
  rad->add_option("--seed", ra.seed, "Seed");
  rad->add_option("--m", ra.m, "Width (rnn)")->check(CLI::PositiveNumber);
  rad->add_option("--L", ra.L, "Length (rnn)")->check(CLI::Range(3, 1000));
  rad->add_option("--d", ra.d, "Output dimension (rnn)")->check(CLI::PositiveNumber);
  rad->add_option("--dx", ra.d_x, "Token dimension (rnn)")->check(CLI::Range(2, 100000));
  rad->add_option("--delta", ra.delta, "Radius Delta (rnn)")->check(CLI::PositiveNumber);
  rad->add_option("--eps-x", ra.eps_x, "Input scale (rnn)")->check(CLI::PositiveNumber);

  ExistenceArgs ea;
  auto* exist = app.add_subcommand("existence", "Build W* and measure its fitting error");
  exist->add_option("--m", ea.m, "Width")->check(CLI::PositiveNumber);
  exist->add_option("--L", ea.L, "Length")->check(CLI::Range(3, 1000));
  exist->add_option("--d", ea.d, "Output dimension")->check(CLI::PositiveNumber);
  exist->add_option("--dx", ea.d_x, "Token dimension")->check(CLI::Range(2, 100000));
  exist->add_option("--p", ea.p, "Terms per (i, j, s)")->check(CLI::PositiveNumber);
  exist->add_option("--phi", ea.phi, "Series for a random concept");
  exist->add_option("--concept", ea.concept_path, "Concept file")->check(CLI::ExistingFile);
  exist->add_option("--eps-e", ea.eps_e, "Fitting accuracy")->check(CLI::PositiveNumber);
  exist->add_option("--eps-x", ea.eps_x, "Input scale")->check(CLI::PositiveNumber);
  exist->add_option("--target", ea.target, "Pass threshold (default eps_e)");
  exist->add_option("--c-star", ea.c_star, "Constant C* in the complexity bounds")->check(CLI::PositiveNumber);
  exist->add_option("--eps-c", ea.eps_c, "Indicator window (default eps_e eps_x / (4 C'))")->check(CLI::NonNegativeNumber);
  exist->add_option("--seed", ea.seed, "Seed");
  exist->add_option("--dump-trace", ea.dump_trace, "Write the forward trace as JSON-lines");
  exist->add_flag("--full", ea.full, "Include full vectors in the trace dump");

  Theorem1Args t1;
  auto* theorem1 = app.add_subcommand("theorem1", "End-to-end pipeline over a sweep");
  theorem1->add_option("--config", t1.config, "INI config")->required()->check(CLI::ExistingFile);
  theorem1->add_flag("--dry-run", t1.dry_run, "Validate the config and derive hyperparameters only");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kUsage;
  }

  try {
    if (*complexity) return cmd_complexity(ca);
    if (*trainc) return cmd_train(ta);
    if (*verify) return cmd_verify(va);
    if (*rad) return cmd_rademacher(ra);
    if (*exist) return cmd_existence(ea);
    if (*theorem1) return cmd_theorem1(t1);
  } catch (const UsageError& e) {
    std::cerr << "rnnlab: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "rnnlab: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "rnnlab: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "rnnlab: " << e.what() << '\n';
    return kFail;
  }
  return kUsage;
}
