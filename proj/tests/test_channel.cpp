#include <gtest/gtest.h>

#include <cmath>

#include "ncgl/channel.hpp"

using namespace ncgl;

TEST(UniformFlip, EntriesMatchAccuracy) {
  const auto C = make_uniform_flip(10, 0.8);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) EXPECT_NEAR(C(i, j), i == j ? 0.8 : 0.2 / 9.0, 1e-15);
}

TEST(UniformFlip, NoiselessIsIdentity) { EXPECT_EQ(make_uniform_flip(2, 1.0), ConfusionMatrix::identity(2)); }

TEST(UniformFlip, ChanceLevelIsRankDeficient) {
  const auto C = make_uniform_flip(2, 0.5);
  EXPECT_DOUBLE_EQ(C(0, 1), 0.5);
  const auto a = analyze(C);
  EXPECT_FALSE(a.is_full_rank);
  EXPECT_FALSE(a.inverse.has_value());
  EXPECT_TRUE(std::isinf(a.max_norm_inv));
}

TEST(UniformFlip, RejectsBadArguments) {
  EXPECT_THROW(make_uniform_flip(1, 0.5), InvalidArgument);
  EXPECT_THROW(make_uniform_flip(3, 1.2), InvalidArgument);
  EXPECT_THROW(make_uniform_flip(3, -0.1), InvalidArgument);
}

TEST(Analyze, TwoByTwoInverse) {
  const auto a = analyze(make_uniform_flip(2, 0.8));
  ASSERT_TRUE(a.is_full_rank);
  EXPECT_NEAR((*a.inverse)(0, 0), 4.0 / 3.0, 1e-12);
  EXPECT_NEAR((*a.inverse)(0, 1), -1.0 / 3.0, 1e-12);
  EXPECT_NEAR(a.max_norm_inv, 5.0 / 3.0, 1e-12);
  EXPECT_TRUE(a.is_diagonally_dominant);
}

TEST(Analyze, IdentityHasUnitNorm) { EXPECT_DOUBLE_EQ(analyze(ConfusionMatrix::identity(4)).max_norm_inv, 1.0); }

TEST(Analyze, TenClassClosedForm) {
  const int m = 10;
  const double pi = 0.8, q = (1 - pi) / (m - 1);
  const double a = 1 / (pi - q), b = (1 - a) / m;
  const double closed = std::abs(a + b) + (m - 1) * std::abs(b);
  const auto res = analyze(make_uniform_flip(m, pi));
  EXPECT_NEAR(res.max_norm_inv, closed, 1e-12);
  EXPECT_NEAR(res.max_norm_inv, 1.5143, 1e-4);
}

TEST(Analyze, UniformFlipSingularExactlyAtChance) {
  for (int m = 2; m <= 6; ++m)
    for (double pi : {0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
      const bool chance = std::abs(pi - 1.0 / m) < 1e-10;
      EXPECT_EQ(analyze(make_uniform_flip(m, pi)).is_full_rank, !chance) << m << " " << pi;
    }
  for (int m = 2; m <= 6; ++m) EXPECT_FALSE(analyze(make_uniform_flip(m, 1.0 / m)).is_full_rank);
}

TEST(Analyze, RandomInverseProperty) {
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    const int m = 2 + t % 5;
    Matrix c(m, m);
    for (int i = 0; i < m; ++i) {
      double s = 0;
      for (int j = 0; j < m; ++j) s += (c(i, j) = exponential1(rng));
      for (int j = 0; j < m; ++j) c(i, j) /= s;
      double r = 0;
      for (int j = 0; j < m; ++j) r += c(i, j);
      c(i, 0) += 1 - r;
    }
    const ConfusionMatrix C(c);
    const auto a = analyze(C);
    if (!a.is_full_rank) continue;
    const Matrix prod = C.matrix() * *a.inverse;
    const Matrix left = *a.inverse * C.matrix();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        EXPECT_NEAR(prod(i, j), i == j ? 1.0 : 0.0, 1e-8);
        EXPECT_NEAR(left(i, j), i == j ? 1.0 : 0.0, 1e-9);
      }
    EXPECT_GE(a.max_norm_inv, 1.0 - 1e-12);
  }
}

TEST(Corrupt, IdentityNeverFlips) {
  Rng rng(3);
  const auto I = ConfusionMatrix::identity(5);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(corrupt(3, I, rng), 3);
}

TEST(Corrupt, FrequencyMatchesDiagonal) {
  Rng rng(5);
  const auto C = make_uniform_flip(10, 0.8);
  const int n = 1000000;
  int hits = 0;
  for (int i = 0; i < n; ++i) hits += corrupt(1, C, rng) == 1;
  EXPECT_NEAR(static_cast<double>(hits) / n, 0.8, 0.002);
}

TEST(Corrupt, ConstantChannelIgnoresInput) {
  const ConfusionMatrix C(Matrix{{0.2, 0.5, 0.3}, {0.2, 0.5, 0.3}, {0.2, 0.5, 0.3}});
  for (int y = 0; y < 3; ++y) {
    Rng a(9), b(9);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(corrupt(y, C, a), corrupt(0, C, b));
  }
}

TEST(Corrupt, DeterministicAndValidated) {
  const auto C = make_uniform_flip(4, 0.6);
  Rng a(42), b(42);
  for (int i = 0; i < 500; ++i) EXPECT_EQ(corrupt(i % 4, C, a), corrupt(i % 4, C, b));
  EXPECT_THROW(corrupt(4, C, a), InvalidArgument);
  EXPECT_THROW(corrupt(-1, C, a), InvalidArgument);
}

TEST(PushForward, Examples) {
  const FiniteJoint P(Matrix{{1.0, 0.0}});
  EXPECT_EQ(push_forward(P, ConfusionMatrix::identity(2)), P);
  const auto Pt = push_forward(P, make_uniform_flip(2, 0.8));
  EXPECT_NEAR(Pt(0, 0), 0.8, 1e-15);
  EXPECT_NEAR(Pt(0, 1), 0.2, 1e-15);
  EXPECT_THROW(push_forward(P, make_uniform_flip(3, 0.8)), InvalidArgument);
}

TEST(PushForward, ConstantChannelGivesSharedRow) {
  const ConfusionMatrix C(Matrix{{0.1, 0.6, 0.3}, {0.1, 0.6, 0.3}, {0.1, 0.6, 0.3}});
  const FiniteJoint P(Matrix{{0.5, 0.0, 0.1}, {0.0, 0.4, 0.0}});
  const auto marg = push_forward(P, C).label_marginal();
  EXPECT_NEAR(marg[0], 0.1, 1e-15);
  EXPECT_NEAR(marg[1], 0.6, 1e-15);
  EXPECT_NEAR(marg[2], 0.3, 1e-15);
}

TEST(PushForward, PreservesMassAndConditionals) {
  Rng rng(17);
  for (int t = 0; t < 200; ++t) {
    const std::size_t xs = 1 + t % 6, m = 2 + t % 4;
    Matrix w(xs, m);
    for (double& v : w.data()) v = exponential1(rng);
    const auto P = FiniteJoint::normalized(w);
    Matrix c(m, m);
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < m; ++j) s += (c(i, j) = exponential1(rng));
      for (std::size_t j = 0; j < m; ++j) c(i, j) /= s;
      double r = 0;
      for (std::size_t j = 0; j < m; ++j) r += c(i, j);
      c(i, 0) += 1 - r;
    }
    const ConfusionMatrix C(c);
    const auto Pt = push_forward(P, C);
    double total = 0;
    for (double v : Pt.probs().data()) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    for (std::size_t x = 0; x < xs; ++x) {
      const auto expect = apply_transposed(C.matrix(), P.at(x));
      for (std::size_t y = 0; y < m; ++y) EXPECT_NEAR(Pt(x, y), expect[y], 1e-15);
    }
  }
}

TEST(ConfusionMatrixJson, RoundTripAndValidation) {
  const auto C = make_uniform_flip(3, 0.7);
  nlohmann::json j = C;
  EXPECT_EQ(j["m"], 3);
  EXPECT_EQ(j.get<ConfusionMatrix>(), C);
  nlohmann::json bad = {{"m", 2}, {"rows", {{0.5, 0.6}, {0.5, 0.5}}}};
  EXPECT_THROW(bad.get<ConfusionMatrix>(), InvalidArgument);
}
