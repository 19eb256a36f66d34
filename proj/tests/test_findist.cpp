#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "ncgl/channel.hpp"
#include "ncgl/findist.hpp"
#include "ncgl/theory.hpp"

using namespace ncgl;

namespace {

const FiniteJoint kP{Matrix{{1.0, 0.0}}};
const FiniteJoint kQ{Matrix{{0.0, 1.0}}};

FiniteJoint random_pair_member(Rng& rng, std::size_t xs, std::size_t m) { return random_joint(xs, m, rng); }

}  // namespace

TEST(Divergence, IdenticalIsZero) {
  Rng rng(1);
  const auto P = random_joint(4, 3, rng);
  for (auto k : {DivergenceKind::TV, DivergenceKind::KL, DivergenceKind::JS}) EXPECT_EQ(divergence(P, P, k), 0.0);
}

TEST(Divergence, DisjointPointMasses) {
  EXPECT_DOUBLE_EQ(divergence(kP, kQ, DivergenceKind::TV), 1.0);
  EXPECT_NEAR(divergence(kP, kQ, DivergenceKind::JS), std::log(2.0), 1e-15);
}

TEST(Divergence, PushForwardsOfDisjointPair) {
  const auto C = make_uniform_flip(2, 0.8);
  const auto Pt = push_forward(kP, C), Qt = push_forward(kQ, C);
  EXPECT_NEAR(divergence(Pt, Qt, DivergenceKind::TV), 0.6, 1e-15);
  const double js = 0.8 * std::log(1.6) + 0.2 * std::log(0.4);
  EXPECT_NEAR(divergence(Pt, Qt, DivergenceKind::JS), js, 1e-14);
  EXPECT_NEAR(js, 0.1927, 1e-4);
}

TEST(Divergence, Errors) {
  EXPECT_THROW(divergence(kP, kQ, DivergenceKind::KL), DomainError);
  const FiniteJoint R(Matrix{{0.5, 0.5}, {0.0, 0.0}});
  EXPECT_THROW(divergence(kP, R, DivergenceKind::TV), InvalidArgument);
}

TEST(Divergence, TvIsAMetric) {
  Rng rng(2);
  for (int t = 0; t < 300; ++t) {
    const std::size_t xs = 1 + t % 5, m = 2 + t % 3;
    const auto A = random_pair_member(rng, xs, m), B = random_pair_member(rng, xs, m),
               Cc = random_pair_member(rng, xs, m);
    const double ab = divergence(A, B, DivergenceKind::TV), ba = divergence(B, A, DivergenceKind::TV);
    EXPECT_EQ(ab, ba);
    EXPECT_GT(ab, 1e-12);
    EXPECT_LE(ab, divergence(A, Cc, DivergenceKind::TV) + divergence(Cc, B, DivergenceKind::TV) + 1e-15);
  }
}

TEST(Divergence, JsTvSandwich) {
  Rng rng(3);
  for (int t = 0; t < 500; ++t) {
    const std::size_t xs = 1 + t % 7, m = 2 + t % 4;
    const auto A = random_joint(xs, m, rng), B = random_joint(xs, m, rng);
    const double tv = divergence(A, B, DivergenceKind::TV), js = divergence(A, B, DivergenceKind::JS);
    EXPECT_LE(0.5 * tv * tv, js + 1e-10);
    EXPECT_LE(js, 2.0 * tv + 1e-10);
  }
}

TEST(BoundedClass, Examples) {
  EXPECT_DOUBLE_EQ(bounded_class_distance(kP, kQ, -1, 1), 2.0);
  const auto C = make_uniform_flip(2, 0.8);
  const double noisy = bounded_class_distance(push_forward(kP, C), push_forward(kQ, C), -1, 1);
  EXPECT_NEAR(noisy, 1.2, 1e-15);
  EXPECT_NEAR(2.0 / noisy, analyze(C).max_norm_inv, 1e-12);
  EXPECT_EQ(bounded_class_distance(kP, kQ, 0, 0), 0.0);
}

TEST(BoundedClass, NonNegativeAndZeroOnSelf) {
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    const auto A = random_joint(3, 3, rng), B = random_joint(3, 3, rng);
    EXPECT_EQ(bounded_class_distance(A, A, -1, 1), 0.0);
    EXPECT_GE(bounded_class_distance(A, B, -1, 1), 0.0);
  }
}

TEST(TransformedDistance, Examples) {
  EXPECT_DOUBLE_EQ(transformed_distance(kP, kQ, Matrix::identity(2), -1, 1), bounded_class_distance(kP, kQ, -1, 1));
  const auto C = make_uniform_flip(2, 0.8);
  EXPECT_NEAR(transformed_distance(kP, kQ, C.matrix(), -1, 1), 1.2, 1e-15);
  EXPECT_EQ(transformed_distance(kP, kQ, Matrix(2, 2), -1, 1), 0.0);
}

TEST(TransformedDistance, MatchesPushForwardDistance) {
  Rng rng(5);
  for (int t = 0; t < 500; ++t) {
    const std::size_t xs = 2 + t % 9;
    const int m = 2 + t % 4;
    const auto A = random_joint(xs, m, rng), B = random_joint(xs, m, rng);
    const auto C = random_channel(m, rng);
    EXPECT_NEAR(transformed_distance(A, B, C.matrix(), -1, 1),
                bounded_class_distance(push_forward(A, C), push_forward(B, C), -1, 1), 1e-10);
  }
}

TEST(ConstrainedClass, InfiniteEpsilonIsBoundedClass) {
  Rng rng(6);
  const auto A = random_joint(4, 3, rng), B = random_joint(4, 3, rng);
  ConstrainedBoxClass cls;
  EXPECT_NEAR(constrained_class_distance(A, B, cls), bounded_class_distance(A, B, -1, 1), 1e-15);
}

TEST(ConstrainedClass, ZeroDifferenceGivesZero) {
  Rng rng(7);
  const auto A = random_joint(3, 3, rng);
  ConstrainedBoxClass cls{-1, 1, Matrix(3, 3, 0.3), 0.0};
  EXPECT_EQ(constrained_class_distance(A, A, cls), 0.0);
}

namespace {

// Exhaustive search over the [c1,c2]² grid at the given resolution.
double grid_maximum(std::span<const double> u, std::span<const double> w, double c1, double c2, double eps,
                    double step) {
  double best = -std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(std::lround((c2 - c1) / step));
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) {
      const double d0 = c1 + i * step, d1 = c1 + j * step;
      if (std::abs(w[0] * d0 + w[1] * d1) <= eps) best = std::max(best, u[0] * d0 + u[1] * d1);
    }
  return best;
}

}  // namespace

TEST(ConstrainedClass, ParallelSlabAtZeroWidth) {
  // u parallel to w, eps = 0: only the component of u orthogonal to w survives, which is zero.
  const std::vector<double> u{0.3, -0.1}, w{0.6, -0.2};
  EXPECT_NEAR(slab_box_maximum(u, w, -1, 1, 0.0), 0.0, 1e-15);
  EXPECT_NEAR(grid_maximum(u, w, -1, 1, 1e-12, 0.01), 0.0, 0.02);
}

TEST(ConstrainedClass, AgreesWithGridSearch) {
  Rng rng(8);
  const double step = 0.01;
  for (int t = 0; t < 60; ++t) {
    std::vector<double> u{2 * uniform01(rng) - 1, 2 * uniform01(rng) - 1};
    std::vector<double> w{2 * uniform01(rng) - 1, 2 * uniform01(rng) - 1};
    const double eps = t % 3 == 0 ? 0.0 : uniform01(rng) * 0.5;
    const double exact = slab_box_maximum(u, w, -1, 1, eps);
    // The grid optimum is feasible, so it never exceeds the exact value; the
    // exact optimum lies within one cell of a grid point that may be barely infeasible.
    const double grid = grid_maximum(u, w, -1, 1, eps + 2 * step * (std::abs(w[0]) + std::abs(w[1])), step);
    const double grid_inner = grid_maximum(u, w, -1, 1, eps, step);
    EXPECT_LE(grid_inner, exact + 1e-12);
    EXPECT_NEAR(grid, exact, 2 * 2 * step * (std::abs(u[0]) + std::abs(u[1])) + 1e-12);
  }
}

TEST(ConstrainedClass, EmptyClassRejected) {
  const std::vector<double> u{0.1, 0.2}, w{1.0, 1.0};
  EXPECT_THROW(slab_box_maximum(u, w, 0.5, 1.0, 0.1), InvalidArgument);
}

TEST(Empirical, PointMassIsReproduced) {
  const FiniteJoint P(Matrix{{0.0, 0.0}, {0.0, 1.0}});
  Rng rng(9);
  EXPECT_EQ(empirical(P, 17, rng), P);
}

TEST(Empirical, DeterministicUnderSeed) {
  Rng g(10);
  const auto P = random_joint(3, 3, g);
  Rng a(77), b(77);
  EXPECT_EQ(empirical(P, 1000, a), empirical(P, 1000, b));
  EXPECT_THROW(empirical(P, 0, a), InvalidArgument);
}

TEST(Empirical, ConvergesAtLargeN) {
  Rng g(11);
  const auto P = random_joint(5, 4, g);
  for (int s = 0; s < 5; ++s) {
    Rng rng(100 + s);
    EXPECT_LE(divergence(empirical(P, 1000000, rng), P, DivergenceKind::TV), 0.01);
  }
}

TEST(FiniteJointJson, RoundTrip) {
  Rng g(12);
  const auto P = random_joint(3, 2, g);
  nlohmann::json j = P;
  EXPECT_EQ(j["support"], 3);
  EXPECT_EQ(j.get<FiniteJoint>(), P);
}
