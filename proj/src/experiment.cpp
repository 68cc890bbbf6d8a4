#include "rnnlab/experiment.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>

#include "rnnlab/parallel.hpp"

#ifndef RNNLAB_VERSION
#define RNNLAB_VERSION "0.1.0-unknown"
#endif

namespace rnnlab {

namespace pt = boost::property_tree;

const char* version_string() { return RNNLAB_VERSION; }

namespace {

// Stream ids of one sweep point.
enum : std::uint64_t { kStreamConcept = 11, kStreamInit = 12, kStreamTrain = 13, kStreamTest = 14, kStreamSgd = 15 };

nlohmann::ordered_json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::string> parts;
  boost::split(parts, text, boost::is_any_of(", "), boost::token_compress_on);
  std::vector<T> out;
  for (auto& p : parts) {
    boost::trim(p);
    if (p.empty()) continue;
    try {
      std::size_t used = 0;
      if constexpr (std::is_floating_point_v<T>) {
        out.push_back(static_cast<T>(std::stod(p, &used)));
      } else {
        out.push_back(static_cast<T>(std::stoll(p, &used)));
      }
      if (used != p.size()) throw std::invalid_argument(p);
    } catch (const std::exception&) {
      throw ConfigError("config: bad list entry '" + p + "' for " + key);
    }
  }
  if (out.empty()) throw ConfigError("config: empty list for " + key);
  return out;
}

template <class T>
void read(const pt::ptree& tree, const std::string& path, T& dst) {
  if (auto v = tree.get_optional<std::string>(path)) {
    try {
      dst = tree.get<T>(path);
    } catch (const pt::ptree_bad_data&) {
      throw ConfigError("config: bad value '" + *v + "' for " + path);
    }
  }
}

template <class T>
void read_list(const pt::ptree& tree, const std::string& path, std::vector<T>& dst) {
  if (auto v = tree.get_optional<std::string>(path)) dst = parse_list<T>(path, *v);
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "dims.m", "dims.L", "dims.d", "dims.d_x", "dims.p",
      "target.phi", "target.concept", "target.label_noise",
      "data.n_train", "data.n_test",
      "train.eps", "train.eps_x", "train.loss", "train.lambda", "train.eta", "train.T", "train.T_cap",
      "train.c_eta", "train.c_T", "train.c_Delta", "train.eval_every", "train.snapshot_every",
      "sweep.m", "sweep.seeds",
      "run.seed", "run.output", "run.threads",
      "lemma.m", "lemma.L", "lemma.d", "lemma.d_x", "lemma.eps_x", "lemma.trials", "lemma.heavy_trials",
      "lemma.seed", "lemma.init_items", "lemma.m_grid", "lemma.delta_grid", "lemma.coupling_delta_grid",
      "lemma.coupling_m_grid", "lemma.n_grid", "lemma.beta_grid", "lemma.mc_samples", "lemma.sign_instances",
      "lemma.adversary_candidates"};
  return keys;
}

void check_keys(const pt::ptree& tree) {
  const auto& keys = known_keys();
  for (const auto& [section, sub] : tree) {
    if (section == "envelopes") continue;
    if (sub.empty()) throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : sub) {
      const std::string full = section + "." + key;
      if (std::find(keys.begin(), keys.end(), full) == keys.end()) throw ConfigError("config: unknown key '" + full + "'");
    }
  }
}

void validate(const ExperimentConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  need(c.dims.m > 0 && c.dims.L >= 3 && c.dims.d > 0 && c.dims.d_x >= 2 && c.p > 0, "dims must be positive, L >= 3, d_x >= 2");
  need(c.eps > 0, "eps must be positive");
  need(c.eps_x > 0 && c.eps_x <= 1.0 / c.dims.L + 1e-12, "eps_x must lie in (0, 1/L]");
  need(c.n_train > 0 && c.n_test > 0, "n_train and n_test must be positive");
  need(c.label_noise >= 0, "label_noise must be nonnegative");
  need(!c.seeds.empty(), "seeds must be nonempty");
  for (int m : c.m_grid) need(m > 0, "sweep m must be positive");
  need(c.eval_every >= 0 && c.snapshot_every >= 0, "eval_every and snapshot_every must be nonnegative");
  need(c.hyper.T_cap > 0, "T_cap must be positive");
  if (!c.concept_path.empty()) need(std::filesystem::exists(c.concept_path), "concept file '" + c.concept_path + "' not found");
  const auto& l = c.lemma;
  need(l.dims.m > 0 && l.dims.L >= 3 && l.dims.d > 0 && l.dims.d_x >= 2, "lemma dims invalid");
  need(l.trials > 0 && l.heavy_trials > 0, "lemma trials must be positive");
  need(!l.m_grid.empty() && !l.delta_grid.empty() && !l.n_grid.empty() && !l.beta_grid.empty() &&
           !l.coupling_delta_grid.empty() && !l.coupling_m_grid.empty(),
       "lemma grids must be nonempty");
  for (const auto& [name, v] : l.envelope_overrides) {
    if (!frozen_envelopes().contains(name)) throw ConfigError("config: unknown envelope constant '" + name + "'");
  }
}

std::string stem(int m, std::uint64_t seed) { return "m" + std::to_string(m) + "_seed" + std::to_string(seed); }

}  // namespace

nlohmann::ordered_json lemma_config_echo(const LemmaConfig& l) {
  nlohmann::ordered_json j;
  j["m"] = l.dims.m;
  j["L"] = l.dims.L;
  j["d"] = l.dims.d;
  j["d_x"] = l.dims.d_x;
  j["eps_x"] = l.eps_x;
  j["trials"] = l.trials;
  j["heavy_trials"] = l.heavy_trials;
  j["seed"] = l.seed;
  j["init_items"] = l.init_items;
  j["m_grid"] = l.m_grid;
  j["delta_grid"] = l.delta_grid;
  j["coupling_delta_grid"] = l.coupling_delta_grid;
  j["coupling_m_grid"] = l.coupling_m_grid;
  j["n_grid"] = l.n_grid;
  j["beta_grid"] = l.beta_grid;
  j["mc_samples"] = l.mc_samples;
  j["sign_instances"] = l.sign_instances;
  j["adversary_candidates"] = l.adversary_candidates;
  nlohmann::ordered_json env;
  for (const auto& [k, v] : frozen_envelopes()) env[k] = l.envelope(k);
  j["envelopes"] = env;
  return j;
}

nlohmann::ordered_json ExperimentConfig::echo() const {
  nlohmann::ordered_json j;
  j["dims"] = {{"m", dims.m}, {"L", dims.L}, {"d", dims.d}, {"d_x", dims.d_x}, {"p", p}};
  j["target"] = {{"phi", phi}, {"concept", concept_path}, {"label_noise", label_noise}};
  j["data"] = {{"n_train", n_train}, {"n_test", n_test}};
  nlohmann::ordered_json t;
  t["eps"] = eps;
  t["eps_x"] = eps_x;
  t["loss"] = loss_name(loss);
  t["lambda"] = hyper.lambda ? nlohmann::ordered_json(*hyper.lambda) : nlohmann::ordered_json("derived");
  t["eta"] = hyper.eta ? nlohmann::ordered_json(*hyper.eta) : nlohmann::ordered_json("derived");
  t["T"] = hyper.T ? nlohmann::ordered_json(*hyper.T) : nlohmann::ordered_json("derived");
  t["T_cap"] = hyper.T_cap;
  t["c_eta"] = hyper.c_eta;
  t["c_T"] = hyper.c_T;
  t["c_Delta"] = hyper.c_Delta;
  t["eval_every"] = eval_every;
  t["snapshot_every"] = snapshot_every;
  j["train"] = t;
  j["sweep"] = {{"m", m_grid.empty() ? std::vector<int>{dims.m} : m_grid}, {"seeds", seeds}};
  j["run"] = {{"output", output_dir}, {"threads", threads}};
  j["lemma"] = lemma_config_echo(lemma);
  return j;
}

ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  check_keys(tree);
  ExperimentConfig c;
  read(tree, "dims.m", c.dims.m);
  read(tree, "dims.L", c.dims.L);
  read(tree, "dims.d", c.dims.d);
  read(tree, "dims.d_x", c.dims.d_x);
  read(tree, "dims.p", c.p);
  read(tree, "target.phi", c.phi);
  read(tree, "target.concept", c.concept_path);
  if (!c.concept_path.empty() && std::filesystem::path(c.concept_path).is_relative() && !base_dir.empty()) {
    c.concept_path = (base_dir / c.concept_path).lexically_normal().string();
  }
  read(tree, "target.label_noise", c.label_noise);
  read(tree, "data.n_train", c.n_train);
  read(tree, "data.n_test", c.n_test);
  read(tree, "train.eps", c.eps);
  read(tree, "train.eps_x", c.eps_x);
  if (auto v = tree.get_optional<std::string>("train.loss")) {
    try {
      c.loss = parse_loss(*v);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
  if (tree.get_optional<std::string>("train.lambda")) c.hyper.lambda = tree.get<double>("train.lambda");
  if (tree.get_optional<std::string>("train.eta")) c.hyper.eta = tree.get<double>("train.eta");
  if (tree.get_optional<std::string>("train.T")) c.hyper.T = tree.get<long>("train.T");
  read(tree, "train.T_cap", c.hyper.T_cap);
  read(tree, "train.c_eta", c.hyper.c_eta);
  read(tree, "train.c_T", c.hyper.c_T);
  read(tree, "train.c_Delta", c.hyper.c_Delta);
  read(tree, "train.eval_every", c.eval_every);
  read(tree, "train.snapshot_every", c.snapshot_every);
  read_list(tree, "sweep.m", c.m_grid);
  if (auto s = tree.get_optional<std::string>("run.seed")) c.seeds = parse_list<std::uint64_t>("run.seed", *s);
  read_list(tree, "sweep.seeds", c.seeds);
  read(tree, "run.output", c.output_dir);
  if (!c.output_dir.empty() && std::filesystem::path(c.output_dir).is_relative() && !base_dir.empty()) {
    c.output_dir = (base_dir / c.output_dir).lexically_normal().string();
  }
  read(tree, "run.threads", c.threads);

  auto& l = c.lemma;
  read(tree, "lemma.m", l.dims.m);
  read(tree, "lemma.L", l.dims.L);
  read(tree, "lemma.d", l.dims.d);
  read(tree, "lemma.d_x", l.dims.d_x);
  read(tree, "lemma.eps_x", l.eps_x);
  read(tree, "lemma.trials", l.trials);
  read(tree, "lemma.heavy_trials", l.heavy_trials);
  read(tree, "lemma.seed", l.seed);
  read(tree, "lemma.init_items", l.init_items);
  read_list(tree, "lemma.m_grid", l.m_grid);
  read_list(tree, "lemma.delta_grid", l.delta_grid);
  read_list(tree, "lemma.coupling_delta_grid", l.coupling_delta_grid);
  read_list(tree, "lemma.coupling_m_grid", l.coupling_m_grid);
  read_list(tree, "lemma.n_grid", l.n_grid);
  read_list(tree, "lemma.beta_grid", l.beta_grid);
  read(tree, "lemma.mc_samples", l.mc_samples);
  read(tree, "lemma.sign_instances", l.sign_instances);
  read(tree, "lemma.adversary_candidates", l.adversary_candidates);
  if (auto env = tree.get_child_optional("envelopes")) {
    for (const auto& [key, value] : *env) {
      try {
        l.envelope_overrides[key] = std::stod(value.data());
      } catch (const std::exception&) {
        throw ConfigError("config: bad envelope value for '" + key + "'");
      }
    }
  }
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  return parse_config(in, path.parent_path());
}

nlohmann::ordered_json Theorem1Row::to_json() const {
  nlohmann::ordered_json j;
  j["m"] = m;
  j["seed"] = seed;
  j["lambda"] = hp.lambda;
  j["eta"] = hp.eta;
  j["T"] = hp.T;
  j["overridden"] = hp.overridden;
  j["warnings"] = hp.warnings;
  j["opt_train"] = number(opt_train);
  j["opt_test"] = number(opt_test);
  j["best_train_risk"] = number(best_train_risk);
  j["best_step"] = best_step;
  j["best_test_risk"] = number(best_test_risk);
  j["final_train_risk"] = number(final_train_risk);
  j["final_test_risk"] = number(final_test_risk);
  j["frobenius_norm"] = number(frobenius_norm);
  std::ostringstream h;
  h << std::hex << trajectory_hash;
  j["trajectory_hash"] = h.str();
  j["train_ok"] = train_ok;
  j["test_ok"] = test_ok;
  if (!error.empty()) j["error"] = error;
  return j;
}

nlohmann::ordered_json Theorem1Summary::to_json(const ExperimentConfig& cfg) const {
  nlohmann::ordered_json j;
  j["version"] = version_string();
  j["config"] = cfg.echo();
  j["dry_run"] = dry_run;
  auto rows_j = nlohmann::ordered_json::array();
  for (const auto& r : rows) rows_j.push_back(r.to_json());
  j["rows"] = rows_j;
  j["pass"] = pass;
  return j;
}

TargetFunction theorem1_target(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (!cfg.concept_path.empty()) {
    TargetFunction F = load_concept(cfg.concept_path);
    if (F.L() != cfg.dims.L || F.d_x() != cfg.dims.d_x || F.d() != cfg.dims.d) {
      throw ConfigError("config: concept file dimensions do not match [dims]");
    }
    return F;
  }
  RngStream rng(seed, kStreamConcept);
  return random_target(cfg.dims.L, cfg.dims.d_x, cfg.dims.d, cfg.p, parse_series(cfg.phi, cfg.eps), rng);
}

Theorem1Summary run_theorem1(const ExperimentConfig& cfg, bool dry_run, std::ostream* log) {
  validate(cfg);
  Theorem1Summary summary;
  summary.dry_run = dry_run;
  const std::vector<int> ms = cfg.m_grid.empty() ? std::vector<int>{cfg.dims.m} : cfg.m_grid;
  std::vector<std::pair<int, std::uint64_t>> points;
  for (int m : ms) {
    for (auto s : cfg.seeds) points.emplace_back(m, s);
  }
  if (dry_run) {
    // Everything short of training: the concept parses, hyperparameters derive.
    for (const auto& [m, seed] : points) {
      Theorem1Row row;
      row.m = m;
      row.seed = seed;
      Dims dims = cfg.dims;
      dims.m = m;
      const TargetFunction F = theorem1_target(cfg, seed);
      row.hp = derive_hyperparams(concept_complexity(F, cfg.eps), dims, cfg.eps, cfg.eps_x, cfg.hyper);
      summary.rows.push_back(std::move(row));
    }
    summary.pass = true;
    return summary;
  }
  if (!cfg.output_dir.empty()) std::filesystem::create_directories(cfg.output_dir);
  const std::string header = "# version " + std::string(version_string()) + "\n# config " + cfg.echo().dump() + "\n";

  summary.rows.resize(points.size());
  std::mutex log_mu;
  parallel_for(points.size(), [&](std::size_t k) {
    const auto [m, seed] = points[k];
    Theorem1Row& row = summary.rows[k];
    row.m = m;
    row.seed = seed;
    try {
      Dims dims = cfg.dims;
      dims.m = m;
      const TargetFunction F = theorem1_target(cfg, seed);
      RngStream init_rng(seed, kStreamInit), train_rng(seed, kStreamTrain), test_rng(seed, kStreamTest),
          sgd_rng(seed, kStreamSgd);
      const NetworkParams params = init_random(dims, init_rng);
      const LabelNoise noise{cfg.label_noise};
      const Dataset train_set = sample_dataset(F, cfg.n_train, train_rng, noise, cfg.loss);
      const Dataset test_set = sample_dataset(F, cfg.n_test, test_rng, noise, cfg.loss);
      row.opt_train = train_set.opt_estimate;
      row.opt_test = test_set.opt_estimate;
      row.hp = derive_hyperparams(concept_complexity(F, cfg.eps), dims, cfg.eps, cfg.eps_x, cfg.hyper);

      std::ofstream csv;
      TrainOptions opts;
      opts.eval_every = cfg.eval_every;
      opts.heldout = &test_set.samples;
      if (!cfg.output_dir.empty()) {
        const auto dir = std::filesystem::path(cfg.output_dir);
        csv.open(dir / ("curve_" + stem(m, seed) + ".csv"));
        csv << header << "# seed " << seed << " m " << m << '\n';
        csv.precision(10);
        write_curve_header(csv);
        opts.csv = &csv;
        opts.snapshot_dir = (dir / ("snapshots_" + stem(m, seed))).string();
        opts.snapshot_every = cfg.snapshot_every;
      }
      const TrainResult res = train(params, train_set, row.hp, sgd_rng, opts);
      row.best_train_risk = res.best.empirical_risk;
      row.best_step = res.best.step;
      row.best_test_risk = res.best.heldout_risk;
      row.final_train_risk = res.curve.back().empirical_risk;
      row.final_test_risk = res.curve.back().heldout_risk;
      row.frobenius_norm = res.curve.back().frobenius_norm;
      row.trajectory_hash = res.trajectory_hash;
      row.train_ok = row.best_train_risk <= row.opt_train + cfg.eps;
      row.test_ok = row.best_test_risk <= row.opt_test + 1.5 * cfg.eps;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    if (log) {
      std::lock_guard lock(log_mu);
      *log << row.to_json().dump() << '\n';
    }
  }, cfg.threads);

  summary.pass = std::all_of(summary.rows.begin(), summary.rows.end(),
                             [](const Theorem1Row& r) { return r.error.empty() && r.train_ok; });
  if (!cfg.output_dir.empty()) {
    std::ofstream out(std::filesystem::path(cfg.output_dir) / "summary.json");
    out << summary.to_json(cfg).dump(2) << '\n';
  }
  return summary;
}

SuiteResult run_lemma_suite(const LemmaConfig& cfg, const std::vector<std::string>& filter, std::ostream* jsonl) {
  const auto& ids = lemma_ids();
  for (const auto& f : filter) {
    if (std::find(ids.begin(), ids.end(), f) == ids.end()) {
      std::ostringstream os;
      os << "unknown lemma id '" << f << "'; valid ids:";
      for (const auto& v : ids) os << ' ' << v;
      throw std::invalid_argument(os.str());
    }
  }
  SuiteResult out;
  out.pass = true;
  const auto echo = lemma_config_echo(cfg);
  for (const auto& id : ids) {
    if (!filter.empty() && std::find(filter.begin(), filter.end(), id) == filter.end()) continue;
    LemmaReport r = run_lemma(id, cfg);
    out.pass = out.pass && r.pass;
    if (jsonl) {
      nlohmann::ordered_json j;
      j["version"] = version_string();
      j["config"] = echo;
      j["report"] = r.to_json();
      *jsonl << j.dump() << '\n';
      jsonl->flush();
    }
    out.reports.push_back(std::move(r));
  }
  return out;
}

}  // namespace rnnlab
