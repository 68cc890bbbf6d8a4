#pragma once

#include "rnnlab/complexity.hpp"
#include "rnnlab/inputs.hpp"
#include "rnnlab/loss.hpp"

#include <compare>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace rnnlab {

// Indices are 1-based: 2 <= i < j <= L, 1 <= r <= p, 1 <= s <= d.
struct TermKey {
  int i = 0;
  int j = 0;
  int r = 0;
  int s = 0;
  auto operator<=>(const TermKey&) const = default;
};

struct Term {
  TaylorSeries phi;  // phi(0) = 0
  Vector wstar;      // unit, last coordinate 0
};

// F*_{j,s}(x*) = sum_{i=2}^{j-1} sum_{r=1}^{p} Phi_{i->j,r,s}(<w*_{i->j,r,s}, x*_i>)
// Unset terms are the zero function.
class TargetFunction {
 public:
  TargetFunction(int L, int d_x, int d, int p);

  int L() const { return L_; }
  int d_x() const { return d_x_; }
  int d() const { return d_; }
  int p() const { return p_; }
  const std::map<TermKey, Term>& terms() const { return terms_; }

  void set_term(const TermKey& key, TaylorSeries phi, Vector wstar);

 private:
  int L_, d_x_, d_, p_;
  std::map<TermKey, Term> terms_;
};

// Every (i,j,r,s) gets the series phi and an independent uniformly random
// admissible direction.
TargetFunction random_target(int L, int d_x, int d, int p, const TaylorSeries& phi, RngStream& rng);

// Concatenate the r-ranges of two targets (p adds); evaluation is additive.
TargetFunction combine(const TargetFunction& a, const TargetFunction& b);

double eval_target(const TargetFunction& F, const TrueSequence& xs, int j, int s);
Vector eval_target_vector(const TargetFunction& F, const TrueSequence& xs, int j);

struct LabeledSample {
  TrueSequence xstar;
  std::vector<Label> ystar;  // y*_3 .. y*_L
};

struct LabelNoise {
  double gaussian_std = 0.0;
};

struct Dataset {
  std::vector<LabeledSample> samples;
  double opt_estimate = 0.0;  // empirical risk of F* itself
  LossKind loss = LossKind::CenteredL2;
};

// Regression labels are F*_j(x*) + noise; cross-entropy labels are the
// argmax coordinate of F*_j(x*) + noise.
Dataset sample_dataset(const TargetFunction& F, int N, RngStream& rng, const LabelNoise& noise = {},
                       LossKind loss = LossKind::CenteredL2, const TokenDistribution& tokens = {});

// Mean over samples of sum_{j=3}^{L} G(F*_j(x*), y*_j).
double target_risk(const TargetFunction& F, const std::vector<LabeledSample>& samples, LossKind loss);

struct ConceptComplexity {
  double C = 0.0;              // max c_eps(Phi, sqrt L)
  double C_sound = 0.0;        // max c_s(Phi, sqrt L)
  double C_sound_varrho = 0.0;  // max c_s(Phi, sqrt(L log(1/eps)))
  int p = 0;
};

ConceptComplexity concept_complexity(const TargetFunction& F, double eps, double c_star = kDefaultCStar);

// Text format:
//   L = 4
//   d_x = 4
//   d = 2
//   p = 1
//   term <i> <j> <r> <s> : <c0> <c1> ... | <w*_1> ... <w*_dx>
// '#' starts a comment.
void write_concept(std::ostream& out, const TargetFunction& F);
TargetFunction read_concept(std::istream& in);
TargetFunction load_concept(const std::string& path);

struct DatasetMeta {
  std::uint64_t seed = 0;
  int L = 0;
  int d_x = 0;
  std::string concept_id;
};

// JSON-lines: {"xstar": [[...]], "ystar": [[...] or int], "meta": {...}}
void write_dataset(std::ostream& out, const std::vector<LabeledSample>& samples, const DatasetMeta& meta);
std::vector<LabeledSample> read_dataset(std::istream& in, DatasetMeta* meta = nullptr);

}  // namespace rnnlab
