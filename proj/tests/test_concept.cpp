#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "rnnlab/concept.hpp"
#include "rnnlab/loss.hpp"

using namespace rnnlab;

namespace {

Vector unit_w(int d_x, RngStream& rng) {
  Vector w = Vector::Zero(d_x);
  w.head(d_x - 1) = random_unit_vector(d_x - 1, rng);
  return w;
}

}  // namespace

// --- loss -------------------------------------------------------------------

TEST(Loss, CenteredL2ValueAndGradient) {
  const Vector y = (Vector(2) << 3.0, 4.0).finished();
  const Vector v = (Vector(2) << 0.0, 0.0).finished();
  auto lv = loss_eval(LossKind::CenteredL2, v, Label(y));
  EXPECT_NEAR(lv.value, 0.0, 1e-15);  // vanishes at v = 0
  lv = loss_eval(LossKind::CenteredL2, y, Label(y));
  EXPECT_NEAR(lv.value, -5.0, 1e-15);  // minimum -||y|| at v = y
  EXPECT_EQ(lv.grad.norm(), 0.0);
  const Vector w = (Vector(2) << 1.0, -1.0).finished();
  lv = loss_eval(LossKind::CenteredL2, w, Label(y));
  EXPECT_NEAR(lv.grad.norm(), 1.0, 1e-15);
}

TEST(Loss, CrossEntropyVanishesAtZeroAndMatchesFiniteDifferences) {
  const Vector z = Vector::Zero(3);
  EXPECT_NEAR(loss_eval(LossKind::CrossEntropy, z, Label(1)).value, 0.0, 1e-15);
  const Vector v = (Vector(3) << 0.3, -1.2, 2.0).finished();
  const auto lv = loss_eval(LossKind::CrossEntropy, v, Label(2));
  for (int k = 0; k < 3; ++k) {
    Vector a = v, b = v;
    a[k] += 1e-6;
    b[k] -= 1e-6;
    const double fd = (loss_eval(LossKind::CrossEntropy, a, Label(2)).value -
                       loss_eval(LossKind::CrossEntropy, b, Label(2)).value) / 2e-6;
    EXPECT_NEAR(lv.grad[k], fd, 1e-8);
  }
}

TEST(Loss, OneLipschitz) {
  RngStream rng(3, 3);
  for (auto kind : {LossKind::CenteredL2, LossKind::CrossEntropy}) {
    const Label y = kind == LossKind::CenteredL2 ? Label(gaussian_vector(4, 1.0, rng)) : Label(1);
    for (int t = 0; t < 200; ++t) {
      const Vector a = gaussian_vector(4, 2.0, rng), b = gaussian_vector(4, 2.0, rng);
      EXPECT_LE(std::abs(loss_eval(kind, a, y).value - loss_eval(kind, b, y).value), (a - b).norm() + 1e-12);
    }
  }
}

TEST(Loss, Errors) {
  EXPECT_THROW(parse_loss("hinge"), std::invalid_argument);
  EXPECT_EQ(parse_loss(loss_name(LossKind::CrossEntropy)), LossKind::CrossEntropy);
  EXPECT_THROW(loss_eval(LossKind::CenteredL2, Vector::Zero(2), Label(0)), std::invalid_argument);
  EXPECT_THROW(loss_eval(LossKind::CrossEntropy, Vector::Zero(2), Label(5)), std::invalid_argument);
  EXPECT_THROW(loss_eval(LossKind::CenteredL2, Vector::Zero(2), Label(Vector::Zero(3))), std::invalid_argument);
}

// --- target functions -------------------------------------------------------

TEST(TargetFunction, EvaluationMatchesDirectSum) {
  RngStream rng(5, 5);
  const int L = 6, d_x = 4, d = 3, p = 2;
  TargetFunction F(L, d_x, d, p);
  struct T {
    TermKey k;
    TaylorSeries phi;
    Vector w;
  };
  std::vector<T> all;
  for (int i = 2; i <= L - 1; ++i) {
    for (int j = i + 1; j <= L; ++j) {
      for (int r = 1; r <= p; ++r) {
        for (int s = 1; s <= d; ++s) {
          T t{{i, j, r, s}, TaylorSeries({0.0, rng.normal(), rng.normal()}), unit_w(d_x, rng)};
          F.set_term(t.k, t.phi, t.w);
          all.push_back(t);
        }
      }
    }
  }
  const TrueSequence xs = sample_true_sequence(L, d_x, TokenDistribution{}, rng);
  for (int j = 3; j <= L; ++j) {
    for (int s = 1; s <= d; ++s) {
      double ref = 0;
      for (const auto& t : all) {
        if (t.k.j == j && t.k.s == s) ref += t.phi(t.w.dot(xs.at(t.k.i)));
      }
      EXPECT_NEAR(eval_target(F, xs, j, s), ref, 1e-12);
    }
  }
}

TEST(TargetFunction, InvariantsEnforced) {
  TargetFunction F(4, 3, 1, 1);
  const Vector w = (Vector(3) << 1.0, 0.0, 0.0).finished();
  EXPECT_THROW(F.set_term({2, 3, 1, 1}, TaylorSeries({1.0, 1.0}), w), std::invalid_argument);   // Phi(0) != 0
  EXPECT_THROW(F.set_term({2, 3, 1, 1}, TaylorSeries::monomial(1), 2.0 * w), std::invalid_argument);
  EXPECT_THROW(F.set_term({2, 3, 1, 1}, TaylorSeries::monomial(1), Vector::Unit(3, 2)), std::invalid_argument);
  EXPECT_THROW(F.set_term({3, 3, 1, 1}, TaylorSeries::monomial(1), w), std::invalid_argument);  // i < j
  EXPECT_THROW(F.set_term({2, 3, 2, 1}, TaylorSeries::monomial(1), w), std::invalid_argument);  // r <= p
  EXPECT_THROW(TargetFunction(2, 3, 1, 1), std::invalid_argument);
}

TEST(TargetFunction, CombineIsAdditive) {
  RngStream rng(6, 6);
  const auto a = random_target(5, 4, 2, 1, TaylorSeries::sine(7), rng);
  const auto b = random_target(5, 4, 2, 2, TaylorSeries::monomial(2), rng);
  const auto c = combine(a, b);
  EXPECT_EQ(c.p(), 3);
  for (int t = 0; t < 10; ++t) {
    const auto xs = sample_true_sequence(5, 4, TokenDistribution{}, rng);
    for (int j = 3; j <= 5; ++j) {
      EXPECT_LT((eval_target_vector(c, xs, j) - eval_target_vector(a, xs, j) - eval_target_vector(b, xs, j)).norm(), 1e-12);
    }
  }
}

TEST(TargetFunction, ConceptFileRoundTrip) {
  RngStream rng(7, 7);
  const auto F = random_target(5, 3, 2, 2, TaylorSeries({0.0, 0.5, -0.25}), rng);
  std::stringstream ss;
  write_concept(ss, F);
  const auto G = read_concept(ss);
  ASSERT_EQ(G.terms().size(), F.terms().size());
  for (const auto& [k, t] : F.terms()) {
    const auto& u = G.terms().at(k);
    EXPECT_EQ(u.phi, t.phi);
    EXPECT_EQ(u.wstar, t.wstar);
  }
}

TEST(TargetFunction, ConceptFileErrorsNameTheLine) {
  std::stringstream bad("L = 4\nd_x = 3\nd = 1\np = 1\nterm 2 3 1 1 : 0 1 0 1 0\n");
  try {
    read_concept(bad);
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("line 5"), std::string::npos);
  }
}

TEST(Dataset, ZeroNoiseRegressionLabelsAreExact) {
  RngStream rng(8, 8);
  const auto F = random_target(4, 4, 2, 1, TaylorSeries::monomial(1), rng);
  const Dataset ds = sample_dataset(F, 50, rng);
  double opt = 0;
  for (const auto& s : ds.samples) {
    ASSERT_EQ(s.ystar.size(), 2u);
    for (int j = 3; j <= 4; ++j) {
      const Vector& y = std::get<Vector>(s.ystar[j - 3]);
      EXPECT_LT((y - eval_target_vector(F, s.xstar, j)).norm(), 1e-15);
      opt -= y.norm();  // G(y, y) = -||y||
    }
  }
  EXPECT_NEAR(ds.opt_estimate, opt / 50, 1e-12);
}

TEST(Dataset, DeterministicGivenSeed) {
  RngStream r1(9, 1), r2(9, 1);
  const auto F1 = random_target(4, 3, 1, 1, TaylorSeries::monomial(1), r1);
  const auto F2 = random_target(4, 3, 1, 1, TaylorSeries::monomial(1), r2);
  const Dataset a = sample_dataset(F1, 5, r1, LabelNoise{0.1});
  const Dataset b = sample_dataset(F2, 5, r2, LabelNoise{0.1});
  std::stringstream sa, sb;
  write_dataset(sa, a.samples, {9, 4, 3, "x"});
  write_dataset(sb, b.samples, {9, 4, 3, "x"});
  EXPECT_EQ(sa.str(), sb.str());
  std::stringstream in(sa.str());
  DatasetMeta meta;
  const auto back = read_dataset(in, &meta);
  ASSERT_EQ(back.size(), 5u);
  EXPECT_EQ(meta.seed, 9u);
  EXPECT_EQ(std::get<Vector>(back[0].ystar[0]), std::get<Vector>(a.samples[0].ystar[0]));
}

TEST(Dataset, CrossEntropyLabelsAreArgmax) {
  RngStream rng(10, 1);
  const auto F = random_target(4, 3, 3, 1, TaylorSeries::monomial(1), rng);
  const Dataset ds = sample_dataset(F, 20, rng, {}, LossKind::CrossEntropy);
  for (const auto& s : ds.samples) {
    Eigen::Index best = 0;
    eval_target_vector(F, s.xstar, 3).maxCoeff(&best);
    EXPECT_EQ(std::get<int>(s.ystar[0]), best);
  }
}

TEST(ConceptComplexity, LinearTargetAndGrowthInL) {
  RngStream rng(11, 1);
  const auto F = random_target(4, 3, 1, 1, TaylorSeries::monomial(1), rng);
  const auto cc = concept_complexity(F, 0.1);
  EXPECT_NEAR(cc.C, complexity_eps(TaylorSeries::monomial(1), 2.0, 0.1), 1e-9);
  EXPECT_EQ(cc.p, 1);
  double prev = 0;
  for (int L : {3, 4, 6, 9}) {
    const auto G = random_target(L, 3, 1, 1, TaylorSeries::monomial(2), rng);
    const double C = concept_complexity(G, 0.1).C;
    EXPECT_GT(C, prev);
    prev = C;
  }
}
