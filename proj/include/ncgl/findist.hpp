#pragma once

// Exact divergences and neural-network (IPM) distances between finite joint
// distributions. These are brute-force oracles: every quantity is computed
// from the full mass tables, never estimated.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ncgl/error.hpp"
#include "ncgl/finite_joint.hpp"
#include "ncgl/matrix.hpp"
#include "ncgl/rng.hpp"

namespace ncgl {

enum class DivergenceKind { TV, KL, JS };

namespace detail {

inline void require_same_shape(const FiniteJoint& P, const FiniteJoint& Q, const char* who) {
  if (!P.same_shape(Q))
    throw InvalidArgument(std::string(who) + ": distributions have different shapes (" +
                          std::to_string(P.support_size()) + "x" + std::to_string(P.classes()) + " vs " +
                          std::to_string(Q.support_size()) + "x" + std::to_string(Q.classes()) + ")");
}

inline double kl_nats(const std::vector<double>& p, const std::vector<double>& q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) throw DomainError("KL divergence: Q(x,y) = 0 where P(x,y) > 0");
    acc += p[i] * std::log(p[i] / q[i]);
  }
  return acc;
}

/// max over d in [c1,c2] of a·d.
inline double box_support(double a, double c1, double c2) { return std::max(c1 * a, c2 * a); }

}  // namespace detail

/// TV = ½ Σ|P − Q|; KL in nats with 0·log 0 = 0; JS against the midpoint.
inline double divergence(const FiniteJoint& P, const FiniteJoint& Q, DivergenceKind kind) {
  detail::require_same_shape(P, Q, "divergence");
  const auto& p = P.probs().data();
  const auto& q = Q.probs().data();
  switch (kind) {
    case DivergenceKind::TV: {
      double acc = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
      return 0.5 * acc;
    }
    case DivergenceKind::KL:
      return detail::kl_nats(p, q);
    case DivergenceKind::JS: {
      std::vector<double> mid(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) mid[i] = 0.5 * (p[i] + q[i]);
      return 0.5 * detail::kl_nats(p, mid) + 0.5 * detail::kl_nats(q, mid);
    }
  }
  throw InvalidArgument("divergence: unknown kind");
}

/// Exact IPM over all functions with values in [c1, c2] on a finite support:
/// (c2 − c1)/2 · Σ_x ‖P(x,·) − Q(x,·)‖₁.
inline double bounded_class_distance(const FiniteJoint& P, const FiniteJoint& Q, double c1, double c2) {
  detail::require_same_shape(P, Q, "bounded_class_distance");
  if (!(c1 <= c2)) throw InvalidArgument("bounded_class_distance: need c1 <= c2");
  double l1 = 0.0;
  const auto& p = P.probs().data();
  const auto& q = Q.probs().data();
  for (std::size_t i = 0; i < p.size(); ++i) l1 += std::abs(p[i] - q[i]);
  return 0.5 * (c2 - c1) * l1;
}

/// Exact IPM over T∘F for F the [c1,c2]-bounded class:
/// (c2 − c1)/2 · Σ_x ‖Tᵀ (P(x,·) − Q(x,·))‖₁.
inline double transformed_distance(const FiniteJoint& P, const FiniteJoint& Q, const Matrix& T, double c1,
                                   double c2) {
  detail::require_same_shape(P, Q, "transformed_distance");
  if (T.rows() != P.classes() || T.cols() != P.classes())
    throw InvalidArgument("transformed_distance: T must be m×m");
  if (!(c1 <= c2)) throw InvalidArgument("transformed_distance: need c1 <= c2");
  std::vector<double> u(P.classes());
  double acc = 0.0;
  for (std::size_t x = 0; x < P.support_size(); ++x) {
    for (std::size_t y = 0; y < P.classes(); ++y) u[y] = P(x, y) - Q(x, y);
    for (double v : apply_transposed(T, u)) acc += std::abs(v);
  }
  return 0.5 * (c2 - c1) * acc;
}

/// Discriminators with values in [c1,c2]^m that, at each support point x,
/// also satisfy |w(x)ᵀ D(x)| ≤ epsilon. epsilon = +infinity gives the plain
/// bounded class.
struct ConstrainedBoxClass {
  double c1 = -1.0;
  double c2 = 1.0;
  Matrix slab_vectors;  // support_size × m, row x is w(x)
  double epsilon = std::numeric_limits<double>::infinity();
};

/// max uᵀd over d ∈ [c1,c2]^m with |wᵀd| ≤ eps.
///
/// Solved through the one-dimensional Lagrangian dual
///   g(μ) = Σ_i max(c1 (u_i − μ w_i), c2 (u_i − μ w_i)) + |μ| eps,
/// which is convex and piecewise linear with kinks at μ = u_i / w_i and μ = 0.
/// The minimum sits on a kink, so bisection over the sorted kinks (on the sign
/// of the forward difference) returns the LP optimum exactly.
inline double slab_box_maximum(std::span<const double> u, std::span<const double> w, double c1, double c2,
                               double eps) {
  const std::size_t m = u.size();
  if (std::isinf(eps)) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) acc += detail::box_support(u[i], c1, c2);
    return acc;
  }
  double lo_w = 0.0, hi_w = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    lo_w -= detail::box_support(-w[i], c1, c2);
    hi_w += detail::box_support(w[i], c1, c2);
  }
  if (lo_w > eps || hi_w < -eps) throw InvalidArgument("constrained class is empty at a support point");

  auto dual = [&](double mu) {
    double acc = std::abs(mu) * eps;
    for (std::size_t i = 0; i < m; ++i) acc += detail::box_support(u[i] - mu * w[i], c1, c2);
    return acc;
  };
  std::vector<double> kinks{0.0};
  for (std::size_t i = 0; i < m; ++i)
    if (w[i] != 0.0) kinks.push_back(u[i] / w[i]);
  std::sort(kinks.begin(), kinks.end());
  kinks.erase(std::unique(kinks.begin(), kinks.end()), kinks.end());

  std::size_t lo = 0, hi = kinks.size() - 1;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (dual(kinks[mid + 1]) < dual(kinks[mid]))
      lo = mid + 1;
    else
      hi = mid;
  }
  return dual(kinks[lo]);
}

inline double constrained_class_distance(const FiniteJoint& P, const FiniteJoint& Q, const ConstrainedBoxClass& cls) {
  detail::require_same_shape(P, Q, "constrained_class_distance");
  if (!(cls.c1 <= cls.c2)) throw InvalidArgument("constrained_class_distance: need c1 <= c2");
  if (!(cls.epsilon >= 0.0)) throw InvalidArgument("constrained_class_distance: epsilon must be >= 0");
  const bool vacuous = std::isinf(cls.epsilon);
  if (!vacuous && (cls.slab_vectors.rows() != P.support_size() || cls.slab_vectors.cols() != P.classes()))
    throw InvalidArgument("constrained_class_distance: slab vectors must cover the support");
  std::vector<double> u(P.classes());
  std::vector<double> zero(P.classes(), 0.0);
  double acc = 0.0;
  for (std::size_t x = 0; x < P.support_size(); ++x) {
    for (std::size_t y = 0; y < P.classes(); ++y) u[y] = P(x, y) - Q(x, y);
    const std::span<const double> w = vacuous ? std::span<const double>(zero) : cls.slab_vectors.row(x);
    acc += slab_box_maximum(u, w, cls.c1, cls.c2, cls.epsilon);
  }
  return acc;
}

/// Normalized histogram of n i.i.d. draws from P on the same support.
inline FiniteJoint empirical(const FiniteJoint& P, std::size_t n, Rng& rng) {
  if (n == 0) throw InvalidArgument("empirical: need at least one sample");
  const auto& p = P.probs().data();
  std::vector<double> cdf(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) cdf[i] = (acc += p[i]);
  std::vector<std::size_t> counts(p.size(), 0);
  for (std::size_t s = 0; s < n; ++s) {
    const double u = uniform01(rng) * acc;
    auto idx = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    if (idx >= p.size()) idx = p.size() - 1;
    while (p[idx] == 0.0 && idx > 0) --idx;
    ++counts[idx];
  }
  Matrix hist(P.support_size(), P.classes());
  for (std::size_t i = 0; i < counts.size(); ++i) hist.data()[i] = static_cast<double>(counts[i]);
  return FiniteJoint::normalized(std::move(hist));
}

}  // namespace ncgl
