#include <gtest/gtest.h>

#include <cmath>

#include "rnnlab/inputs.hpp"

using namespace rnnlab;

TEST(ReferenceToken, IsUnitWithHalfLastCoordinate) {
  const Vector x = reference_token(5);
  EXPECT_NEAR(x.norm(), 1.0, 1e-15);
  EXPECT_EQ(x[4], 0.5);
  EXPECT_EQ(x.head(3).norm(), 0.0);
  EXPECT_THROW(reference_token(1), std::invalid_argument);
}

TEST(NormalizeTrue, PadsToUnitTokens) {
  std::vector<Vector> raw{Vector::Zero(3), (Vector(3) << 0.5, 0.0, 0.0).finished(),
                          (Vector(3) << 0.0, 0.5, -0.6).finished()};
  const TrueSequence xs = normalize_true(raw);
  ASSERT_EQ(xs.tokens.size(), 3u);
  for (const auto& t : xs.tokens) {
    EXPECT_NEAR(t.norm(), 1.0, 1e-12);
    EXPECT_EQ(t[3], 0.5);
  }
  EXPECT_LT(xs.tokens[2][2], 0.0);  // sign kept
  EXPECT_EQ(xs.tokens[1][0], 0.5);
}

TEST(NormalizeTrue, RejectsLongTokens) {
  std::vector<Vector> raw{Vector::Ones(3)};
  EXPECT_THROW(normalize_true(raw), std::invalid_argument);
}

TEST(ToActual, LayoutAndNorms) {
  RngStream rng(1, 1);
  const int L = 6, d_x = 4;
  const double eps_x = 0.1;
  const TrueSequence xs = sample_true_sequence(L, d_x, TokenDistribution{}, rng);
  const ActualSequence x = to_actual(xs, eps_x);
  ASSERT_EQ(x.L(), L);
  EXPECT_EQ(x.input_dim(), d_x + 1);
  // x_1 = (0, 1)
  EXPECT_EQ(x.at(1).head(d_x).norm(), 0.0);
  EXPECT_EQ(x.at(1)[d_x], 1.0);
  for (int ell = 2; ell <= L; ++ell) {
    EXPECT_NEAR(x.at(ell).norm(), eps_x, 1e-14);
    EXPECT_EQ(x.at(ell)[d_x], 0.0);
  }
  for (int ell = 2; ell < L; ++ell) EXPECT_LT((x.at(ell).head(d_x) - eps_x * xs.at(ell)).norm(), 1e-15);
  EXPECT_LT((x.at(L).head(d_x) - eps_x * reference_token(d_x)).norm(), 1e-15);
}

TEST(ToActual, EpsXRange) {
  RngStream rng(1, 2);
  const TrueSequence xs = sample_true_sequence(4, 3, TokenDistribution{}, rng);
  EXPECT_NO_THROW(to_actual(xs, 0.25));
  EXPECT_THROW(to_actual(xs, 0.26), std::invalid_argument);
  EXPECT_THROW(to_actual(xs, 0.0), std::invalid_argument);
  EXPECT_THROW(check_eps_x(0.1, 2), std::invalid_argument);
}

TEST(NullSequence, AllContentTokensAreReference) {
  const NullSequence x0 = null_sequence(5, 3, 0.2);
  for (int ell = 2; ell <= 5; ++ell) EXPECT_LT((x0.at(ell).head(3) - 0.2 * reference_token(3)).norm(), 1e-15);
}

TEST(TokenDistribution, SphereSliceTokensAreAdmissible) {
  RngStream rng(4, 4);
  TokenDistribution dist;
  for (int k = 0; k < 100; ++k) {
    const Vector t = dist.sample(6, rng);
    EXPECT_NEAR(t.norm(), 1.0, 1e-12);
    EXPECT_EQ(t[5], 0.5);
  }
}

TEST(TokenDistribution, FiniteSupportIsUsed) {
  RngStream rng(4, 5);
  TokenDistribution dist;
  dist.support = {reference_token(3), (Vector(3) << std::sqrt(0.75), 0.0, 0.5).finished()};
  int first = 0;
  for (int k = 0; k < 1000; ++k) {
    const Vector t = dist.sample(3, rng);
    const bool a = t == dist.support[0], b = t == dist.support[1];
    ASSERT_TRUE(a || b);
    first += a;
  }
  EXPECT_GT(first, 400);
  EXPECT_LT(first, 600);
}

TEST(SampleTrueSequence, DeterministicAndSized) {
  RngStream a(9, 9), b(9, 9);
  const auto xa = sample_true_sequence(7, 4, TokenDistribution{}, a);
  const auto xb = sample_true_sequence(7, 4, TokenDistribution{}, b);
  ASSERT_EQ(xa.tokens.size(), 5u);
  for (std::size_t k = 0; k < xa.tokens.size(); ++k) EXPECT_EQ(xa.tokens[k], xb.tokens[k]);
}
