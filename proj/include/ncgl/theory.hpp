#pragma once

// Executable checks of the approximation bounds relating clean and
// label-corrupted distances, together with constructions of tight witnesses,
// counterexample discriminator classes, and finite-sample convergence tables.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <json.hpp>

#include "ncgl/channel.hpp"
#include "ncgl/error.hpp"
#include "ncgl/findist.hpp"
#include "ncgl/finite_joint.hpp"
#include "ncgl/parallel.hpp"
#include "ncgl/rng.hpp"

namespace ncgl {

inline constexpr double kBoundTolerance = 1e-9;

/// lhs ≤ mid ≤ rhs, with slacks mid − lhs and rhs − mid.
struct BoundReport {
  bool lower_ok = false;
  bool upper_ok = false;
  double lhs = 0.0;
  double mid = 0.0;
  double rhs = 0.0;
  double slack_lower = 0.0;
  double slack_upper = 0.0;

  bool ok() const { return lower_ok && upper_ok; }

  static BoundReport make(double lhs, double mid, double rhs, double tol = kBoundTolerance) {
    BoundReport r;
    r.lhs = lhs;
    r.mid = mid;
    r.rhs = rhs;
    r.slack_lower = mid - lhs;
    r.slack_upper = rhs - mid;
    r.lower_ok = r.slack_lower >= -tol;
    r.upper_ok = r.slack_upper >= -tol;
    return r;
  }
};

inline void to_json(nlohmann::json& j, const BoundReport& r) {
  j = nlohmann::json{{"lower_ok", r.lower_ok},       {"upper_ok", r.upper_ok},
                     {"lhs", r.lhs},                 {"mid", r.mid},
                     {"rhs", r.rhs},                 {"slack_lower", r.slack_lower},
                     {"slack_upper", r.slack_upper}};
}

struct DivergenceBounds {
  BoundReport tv;
  BoundReport js;
};

namespace detail {

inline double require_inverse_norm(const ConfusionMatrix& C, const char* who) {
  const ChannelAnalysis a = analyze(C);
  if (!a.is_full_rank) throw PreconditionViolation(std::string(who) + ": channel is rank-deficient");
  return a.max_norm_inv;
}

}  // namespace detail

/// TV(P̃,Q̃) ≤ TV(P,Q) ≤ |||C⁻¹|||_∞ TV(P̃,Q̃) and
/// JS(P̃,Q̃)²/8 ≤ JS(P,Q) ≤ |||C⁻¹|||_∞ √(8 JS(P̃,Q̃)).
inline DivergenceBounds check_thm1(const FiniteJoint& P, const FiniteJoint& Q, const ConfusionMatrix& C) {
  const double k = detail::require_inverse_norm(C, "check_thm1");
  const FiniteJoint Pt = push_forward(P, C);
  const FiniteJoint Qt = push_forward(Q, C);
  const double tv = divergence(P, Q, DivergenceKind::TV);
  const double tv_noisy = divergence(Pt, Qt, DivergenceKind::TV);
  const double js = divergence(P, Q, DivergenceKind::JS);
  const double js_noisy = divergence(Pt, Qt, DivergenceKind::JS);
  return {BoundReport::make(tv_noisy, tv, k * tv_noisy),
          BoundReport::make(js_noisy * js_noisy / 8.0, js, k * std::sqrt(8.0 * js_noisy))};
}

/// d_F(P̃,Q̃) ≤ d_F(P,Q) ≤ |||C⁻¹|||_∞ d_F(P̃,Q̃) for F the [c1,c2]-bounded class.
inline BoundReport check_thm2_bounded(const FiniteJoint& P, const FiniteJoint& Q, const ConfusionMatrix& C, double c1,
                                      double c2) {
  const double k = detail::require_inverse_norm(C, "check_thm2_bounded");
  const double clean = bounded_class_distance(P, Q, c1, c2);
  const double noisy = bounded_class_distance(push_forward(P, C), push_forward(Q, C), c1, c2);
  return BoundReport::make(noisy, clean, k * noisy);
}

enum class TightSide { Lower, Upper };

struct WitnessPair {
  FiniteJoint P;
  FiniteJoint Q;
};

namespace detail {

/// Per-label difference placed at the first support point (its negation goes
/// to the second). Lower side: all-ones. Upper side: the row of C⁻¹ with the
/// largest absolute sum, i.e. C⁻ᵀ e_j, which makes ‖d‖₁ / ‖Cᵀd‖₁ = |||C⁻¹|||_∞.
inline std::vector<double> witness_direction(const ConfusionMatrix& C, TightSide side) {
  const auto m = static_cast<std::size_t>(C.classes());
  if (side == TightSide::Lower) return std::vector<double>(m, 1.0);
  const ChannelAnalysis a = analyze(C);
  if (!a.is_full_rank) throw PreconditionViolation("witness_tight: upper side needs a full-rank channel");
  const Matrix& inv = *a.inverse;
  std::size_t best = 0;
  double best_sum = -1.0;
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (double v : inv.row(i)) s += std::abs(v);
    if (s > best_sum) {
      best_sum = s;
      best = i;
    }
  }
  return {inv.row(best).begin(), inv.row(best).end()};
}

}  // namespace detail

/// Largest eps for which the witness pair stays non-negative.
inline double max_witness_eps(const ConfusionMatrix& C, TightSide side) {
  const auto d = detail::witness_direction(C, side);
  double peak = 0.0;
  for (double v : d) peak = std::max(peak, std::abs(v));
  return 1.0 / (static_cast<double>(C.classes()) * peak);
}

/// Two-point-support pair with (P − Q)(x₁,·) = eps·d and (P − Q)(x₂,·) = −eps·d,
/// built on the uniform joint over the 2m cells.
inline WitnessPair witness_tight(const ConfusionMatrix& C, double eps, TightSide side) {
  if (!(eps >= 0.0)) throw InvalidArgument("witness_tight: eps must be non-negative");
  const auto d = detail::witness_direction(C, side);
  const double limit = max_witness_eps(C, side);
  if (eps > limit)
    throw InvalidArgument("witness_tight: eps " + std::to_string(eps) + " exceeds the maximal feasible eps " +
                          std::to_string(limit));
  const auto m = static_cast<std::size_t>(C.classes());
  const double base = 1.0 / (2.0 * static_cast<double>(m));
  Matrix p(2, m), q(2, m);
  for (std::size_t y = 0; y < m; ++y) {
    const double half = 0.5 * eps * d[y];
    p(0, y) = base + half;
    q(0, y) = base - half;
    p(1, y) = base - half;
    q(1, y) = base + half;
  }
  for (double& v : p.data()) v = std::max(v, 0.0);
  for (double& v : q.data()) v = std::max(v, 0.0);
  return {FiniteJoint(std::move(p)), FiniteJoint(std::move(q))};
}

struct CounterexampleReport {
  double gap_f3 = 0.0;  // d_F3(P,Q) / max(d_F3(P̃,Q̃), eps)
  double gap_f4 = 0.0;  // d_F4(P̃,Q̃) / max(d_F4(P,Q), eps)
  double f3_clean = 0.0;
  double f3_noisy = 0.0;
  double f4_clean = 0.0;
  double f4_noisy = 0.0;
};

inline void to_json(nlohmann::json& j, const CounterexampleReport& r) {
  j = nlohmann::json{{"gap_f3", r.gap_f3},     {"gap_f4", r.gap_f4},     {"f3_clean", r.f3_clean},
                     {"f3_noisy", r.f3_noisy}, {"f4_clean", r.f4_clean}, {"f4_noisy", r.f4_noisy}};
}

inline constexpr double kEigenAngleThreshold = 1e-6;

namespace detail {

inline double angle_between(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  const double c = std::min(1.0, std::abs(dot) / std::sqrt(na * nb));
  return std::acos(c);
}

inline Matrix difference_table(const FiniteJoint& P, const FiniteJoint& Q) {
  return P.probs() - Q.probs();
}

}  // namespace detail

/// True when some support point with positive mass has a label-difference
/// vector u(x) that Cᵀ does not map onto its own line.
inline bool satisfies_non_eigenvector_condition(const FiniteJoint& P, const FiniteJoint& Q, const ConfusionMatrix& C) {
  const Matrix U = detail::difference_table(P, Q);
  for (std::size_t x = 0; x < U.rows(); ++x) {
    if (P.support_mass(x) + Q.support_mass(x) <= 0.0) continue;
    const auto u = U.row(x);
    const auto cu = apply_transposed(C.matrix(), u);
    if (detail::angle_between(u, cu) > kEigenAngleThreshold) return true;
  }
  return false;
}

/// Constrained-class distances for the two slab families at a given eps:
/// F3 uses slab vectors Cᵀu(x), F4 uses u(x), both inside the [-1,1] box.
inline CounterexampleReport counterexample_distances(const FiniteJoint& P, const FiniteJoint& Q,
                                                     const ConfusionMatrix& C, double eps) {
  const FiniteJoint Pt = push_forward(P, C);
  const FiniteJoint Qt = push_forward(Q, C);
  const Matrix U = detail::difference_table(P, Q);
  const Matrix CU = U * C.matrix();  // row x is Cᵀu(x)

  ConstrainedBoxClass f3{-1.0, 1.0, CU, eps};
  ConstrainedBoxClass f4{-1.0, 1.0, U, eps};
  CounterexampleReport r;
  r.f3_clean = constrained_class_distance(P, Q, f3);
  r.f3_noisy = constrained_class_distance(Pt, Qt, f3);
  r.f4_clean = constrained_class_distance(P, Q, f4);
  r.f4_noisy = constrained_class_distance(Pt, Qt, f4);
  return r;
}

inline CounterexampleReport build_counterexample(const FiniteJoint& P, const FiniteJoint& Q, const ConfusionMatrix& C,
                                                 double eps) {
  if (!P.same_shape(Q) || P.classes() != static_cast<std::size_t>(C.classes()))
    throw InvalidArgument("build_counterexample: shape mismatch");
  if (!(eps > 0.0)) throw InvalidArgument("build_counterexample: eps must be positive");
  if (P == Q) throw DegenerateInstance("build_counterexample: P == Q, both gaps are undefined");
  if (!analyze(C).is_full_rank) throw PreconditionViolation("build_counterexample: channel is rank-deficient");
  if (!satisfies_non_eigenvector_condition(P, Q, C))
    throw PreconditionViolation(
        "build_counterexample: every label-difference vector is an eigenvector of the channel");
  CounterexampleReport r = counterexample_distances(P, Q, C, eps);
  r.gap_f3 = r.f3_clean / std::max(r.f3_noisy, eps);
  r.gap_f4 = r.f4_noisy / std::max(r.f4_clean, eps);
  return r;
}

/// Limit of the two non-vanishing distances as eps → 0: min(d_F3(P,Q), d_F4(P̃,Q̃))
/// at eps = 0. Since the vanishing sides are at most |X|·eps, gaps at eps are at
/// least scale / (|X|·eps).
inline double counterexample_scale(const FiniteJoint& P, const FiniteJoint& Q, const ConfusionMatrix& C) {
  const CounterexampleReport r = counterexample_distances(P, Q, C, 0.0);
  return std::min(r.f3_clean, r.f4_noisy);
}

struct ConvergenceRow {
  std::size_t n = 0;
  double mean_deviation = 0.0;
};

/// Mean over trials of |d_F(P_n,Q_n) − d_F(P,Q)| for the [c1,c2]-bounded class.
/// Trial t at sample size index k draws from its own seeded sub-stream.
inline std::vector<ConvergenceRow> empirical_convergence(const FiniteJoint& P, const FiniteJoint& Q,
                                                         const std::vector<std::size_t>& n_list, std::size_t trials,
                                                         std::uint64_t seed, double c1 = -1.0, double c2 = 1.0) {
  if (n_list.empty()) throw InvalidArgument("empirical_convergence: empty n_list");
  for (std::size_t i = 1; i < n_list.size(); ++i)
    if (n_list[i] <= n_list[i - 1]) throw InvalidArgument("empirical_convergence: n_list must be increasing");
  if (trials == 0) throw InvalidArgument("empirical_convergence: need at least one trial");
  const double exact = bounded_class_distance(P, Q, c1, c2);
  std::vector<double> dev(n_list.size() * trials, 0.0);
  parallel_for(dev.size(), [&](std::size_t idx) {
    const std::size_t k = idx / trials;
    Rng rp = substream(seed, "empirical-P", idx);
    Rng rq = substream(seed, "empirical-Q", idx);
    const FiniteJoint Pn = empirical(P, n_list[k], rp);
    const FiniteJoint Qn = empirical(Q, n_list[k], rq);
    dev[idx] = std::abs(bounded_class_distance(Pn, Qn, c1, c2) - exact);
  });
  std::vector<ConvergenceRow> rows;
  for (std::size_t k = 0; k < n_list.size(); ++k) {
    double acc = 0.0;
    for (std::size_t t = 0; t < trials; ++t) acc += dev[k * trials + t];
    rows.push_back({n_list[k], acc / static_cast<double>(trials)});
  }
  return rows;
}

/// Consecutive means may grow by at most `slack`× (Monte-Carlo noise allowance).
inline bool is_non_increasing_within(const std::vector<ConvergenceRow>& rows, double slack = 2.0) {
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].mean_deviation > slack * rows[i - 1].mean_deviation) return false;
  return true;
}

// Random instance generators shared by the verification suites.

/// Flat-Dirichlet joint over support_size × m cells.
inline FiniteJoint random_joint(std::size_t support_size, std::size_t m, Rng& rng) {
  Matrix w(support_size, m);
  for (double& v : w.data()) v = exponential1(rng);
  return FiniteJoint::normalized(std::move(w));
}

/// Row-stochastic matrix with flat-Dirichlet rows, redrawn until full rank.
inline ConfusionMatrix random_channel(int m, Rng& rng) {
  for (;;) {
    Matrix c(m, m);
    for (int i = 0; i < m; ++i) {
      double total = 0.0;
      for (int j = 0; j < m; ++j) total += (c(i, j) = exponential1(rng));
      double row_sum = 0.0;
      for (int j = 0; j < m; ++j) row_sum += (c(i, j) /= total);
      c(i, 0) += 1.0 - row_sum;
      if (c(i, 0) < 0.0) c(i, 0) = 0.0;
    }
    ConfusionMatrix C(std::move(c));
    if (analyze(C).is_full_rank) return C;
  }
}

/// Max-norm-one matrix: random signs and magnitudes, rows rescaled so the
/// largest absolute row sum is exactly 1.
inline Matrix random_unit_max_norm(int m, Rng& rng) {
  Matrix T(m, m);
  for (double& v : T.data()) v = 2.0 * uniform01(rng) - 1.0;
  const double norm = max_row_abs_sum(T);
  for (double& v : T.data()) v /= norm;
  return T;
}

}  // namespace ncgl
