#include "rnnlab/concept.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace rnnlab {

TargetFunction::TargetFunction(int L, int d_x, int d, int p) : L_(L), d_x_(d_x), d_(d), p_(p) {
  if (L < 3 || d_x < 2 || d < 1 || p < 1) {
    throw std::invalid_argument("TargetFunction: need L >= 3, d_x >= 2, d >= 1, p >= 1");
  }
}

void TargetFunction::set_term(const TermKey& k, TaylorSeries phi, Vector wstar) {
  if (k.i < 2 || k.i >= k.j || k.j > L_ || k.r < 1 || k.r > p_ || k.s < 1 || k.s > d_) {
    throw std::invalid_argument("TargetFunction: term index out of range");
  }
  if (phi.coeff(0) != 0.0) throw std::invalid_argument("TargetFunction: Phi(0) must be 0");
  if (wstar.size() != d_x_) throw std::invalid_argument("TargetFunction: w* has wrong dimension");
  if (std::abs(wstar.norm() - 1.0) > 1e-9) throw std::invalid_argument("TargetFunction: w* must be a unit vector");
  if (wstar[d_x_ - 1] != 0.0) throw std::invalid_argument("TargetFunction: w* must have last coordinate 0");
  terms_[k] = Term{std::move(phi), std::move(wstar)};
}

TargetFunction random_target(int L, int d_x, int d, int p, const TaylorSeries& phi, RngStream& rng) {
  TargetFunction F(L, d_x, d, p);
  for (int j = 3; j <= L; ++j) {
    for (int i = 2; i < j; ++i) {
      for (int r = 1; r <= p; ++r) {
        for (int s = 1; s <= d; ++s) {
          Vector w = Vector::Zero(d_x);
          w.head(d_x - 1) = random_unit_vector(d_x - 1, rng);
          F.set_term({i, j, r, s}, phi, std::move(w));
        }
      }
    }
  }
  return F;
}

TargetFunction combine(const TargetFunction& a, const TargetFunction& b) {
  if (a.L() != b.L() || a.d_x() != b.d_x() || a.d() != b.d()) {
    throw std::invalid_argument("combine: targets have different shapes");
  }
  TargetFunction out(a.L(), a.d_x(), a.d(), a.p() + b.p());
  for (const auto& [k, t] : a.terms()) out.set_term(k, t.phi, t.wstar);
  for (const auto& [k, t] : b.terms()) out.set_term({k.i, k.j, k.r + a.p(), k.s}, t.phi, t.wstar);
  return out;
}

double eval_target(const TargetFunction& F, const TrueSequence& xs, int j, int s) {
  if (j < 3 || j > F.L() || s < 1 || s > F.d()) throw std::invalid_argument("eval_target: index out of range");
  if (xs.L() != F.L()) throw std::invalid_argument("eval_target: sequence length mismatch");
  double total = 0.0;
  for (auto it = F.terms().lower_bound({2, j, 0, 0}); it != F.terms().end() && it->first.i < j; ++it) {
    // keys are ordered by i first; skip other (j, s) combinations
    if (it->first.j != j || it->first.s != s) continue;
    total += it->second.phi(it->second.wstar.dot(xs.at(it->first.i)));
  }
  return total;
}

Vector eval_target_vector(const TargetFunction& F, const TrueSequence& xs, int j) {
  Vector v(F.d());
  for (int s = 1; s <= F.d(); ++s) v[s - 1] = eval_target(F, xs, j, s);
  return v;
}

namespace {

Label make_label(const Vector& value, LossKind loss) {
  if (loss == LossKind::CenteredL2) return value;
  Eigen::Index best = 0;
  value.maxCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace

double target_risk(const TargetFunction& F, const std::vector<LabeledSample>& samples, LossKind loss) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) {
    for (int j = 3; j <= F.L(); ++j) {
      total += loss_eval(loss, eval_target_vector(F, s.xstar, j), s.ystar.at(static_cast<std::size_t>(j - 3))).value;
    }
  }
  return total / static_cast<double>(samples.size());
}

Dataset sample_dataset(const TargetFunction& F, int N, RngStream& rng, const LabelNoise& noise, LossKind loss,
                       const TokenDistribution& tokens) {
  if (N < 1) throw std::invalid_argument("sample_dataset: N must be positive");
  Dataset ds;
  ds.loss = loss;
  ds.samples.reserve(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) {
    LabeledSample s;
    s.xstar = sample_true_sequence(F.L(), F.d_x(), tokens, rng);
    for (int j = 3; j <= F.L(); ++j) {
      Vector y = eval_target_vector(F, s.xstar, j);
      if (noise.gaussian_std > 0) y += gaussian_vector(F.d(), noise.gaussian_std, rng);
      s.ystar.push_back(make_label(y, loss));
    }
    ds.samples.push_back(std::move(s));
  }
  ds.opt_estimate = target_risk(F, ds.samples, loss);
  return ds;
}

ConceptComplexity concept_complexity(const TargetFunction& F, double eps, double c_star) {
  ConceptComplexity c;
  c.p = F.p();
  const double R = std::sqrt(static_cast<double>(F.L()));
  const double R_varrho = std::sqrt(F.L() * std::log(1.0 / eps));
  for (const auto& [k, t] : F.terms()) {
    c.C = std::max(c.C, complexity_eps(t.phi, R, eps, c_star));
    c.C_sound = std::max(c.C_sound, complexity_sound(t.phi, R, c_star));
    c.C_sound_varrho = std::max(c.C_sound_varrho, complexity_sound(t.phi, R_varrho, c_star));
  }
  return c;
}

void write_concept(std::ostream& out, const TargetFunction& F) {
  out.precision(17);
  out << "L = " << F.L() << "\nd_x = " << F.d_x() << "\nd = " << F.d() << "\np = " << F.p() << '\n';
  for (const auto& [k, t] : F.terms()) {
    out << "term " << k.i << ' ' << k.j << ' ' << k.r << ' ' << k.s << " :";
    for (double c : t.phi.coeffs()) out << ' ' << c;
    out << " |";
    for (Eigen::Index q = 0; q < t.wstar.size(); ++q) out << ' ' << t.wstar[q];
    out << '\n';
  }
}

TargetFunction read_concept(std::istream& in) {
  int L = 0, d_x = 0, d = 0, p = 0;
  std::vector<std::pair<TermKey, std::pair<std::vector<double>, std::vector<double>>>> pending;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& why) {
    throw std::invalid_argument("concept file line " + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    if (word == "term") {
      TermKey k;
      std::string colon;
      if (!(ls >> k.i >> k.j >> k.r >> k.s >> colon) || colon != ":") fail("expected 'term i j r s :'");
      std::vector<double> coeffs, w;
      std::string tok;
      bool in_w = false;
      while (ls >> tok) {
        if (tok == "|") {
          in_w = true;
          continue;
        }
        try {
          (in_w ? w : coeffs).push_back(std::stod(tok));
        } catch (const std::exception&) {
          fail("bad number '" + tok + "'");
        }
      }
      if (!in_w) fail("missing '|' before w*");
      pending.push_back({k, {coeffs, w}});
      continue;
    }
    std::string eq;
    int value = 0;
    if (!(ls >> eq >> value) || eq != "=") fail("expected 'key = value'");
    if (word == "L") L = value;
    else if (word == "d_x") d_x = value;
    else if (word == "d") d = value;
    else if (word == "p") p = value;
    else fail("unknown key '" + word + "'");
  }
  TargetFunction F(L, d_x, d, p);
  for (auto& [k, cw] : pending) {
    F.set_term(k, TaylorSeries(cw.first), Eigen::Map<const Vector>(cw.second.data(), static_cast<Eigen::Index>(cw.second.size())));
  }
  return F;
}

TargetFunction load_concept(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open concept file " + path);
  return read_concept(in);
}

void write_dataset(std::ostream& out, const std::vector<LabeledSample>& samples, const DatasetMeta& meta) {
  auto to_list = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  for (const auto& s : samples) {
    nlohmann::ordered_json rec;
    auto xs = nlohmann::json::array();
    for (const auto& t : s.xstar.tokens) xs.push_back(to_list(t));
    auto ys = nlohmann::json::array();
    for (const auto& y : s.ystar) {
      if (const auto* v = std::get_if<Vector>(&y)) ys.push_back(to_list(*v));
      else ys.push_back(std::get<int>(y));
    }
    rec["xstar"] = xs;
    rec["ystar"] = ys;
    rec["meta"] = {{"seed", meta.seed}, {"L", meta.L}, {"d_x", meta.d_x}, {"concept", meta.concept_id}};
    out << rec.dump() << '\n';
  }
}

std::vector<LabeledSample> read_dataset(std::istream& in, DatasetMeta* meta) {
  std::vector<LabeledSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    LabeledSample s;
    for (const auto& t : rec.at("xstar")) {
      const auto v = t.get<std::vector<double>>();
      s.xstar.tokens.push_back(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    for (const auto& y : rec.at("ystar")) {
      if (y.is_number_integer()) {
        s.ystar.emplace_back(y.get<int>());
      } else {
        const auto v = y.get<std::vector<double>>();
        s.ystar.emplace_back(Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()))));
      }
    }
    if (meta && rec.contains("meta")) {
      const auto& m = rec["meta"];
      meta->seed = m.value("seed", std::uint64_t{0});
      meta->L = m.value("L", 0);
      meta->d_x = m.value("d_x", 0);
      meta->concept_id = m.value("concept", std::string{});
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace rnnlab
