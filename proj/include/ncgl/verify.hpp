#pragma once

// Randomized verification suites over the exact theory checks.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "ncgl/findist.hpp"
#include "ncgl/parallel.hpp"
#include "ncgl/theory.hpp"

namespace ncgl {

inline constexpr double kIdentityTolerance = 1e-10;
inline constexpr double kTightnessTolerance = 1e-9;

struct SuiteRow {
  std::string name;
  std::size_t passed = 0;
  std::size_t total = 0;
  /// Smallest slack for bound checks, largest deviation for equality checks.
  double worst = 0.0;
  double seconds = 0.0;
  bool ok() const { return total > 0 && passed == total; }
};

struct TheoryInstance {
  FiniteJoint P;
  FiniteJoint Q;
  ConfusionMatrix C;
  double c1 = -1.0;
  double c2 = 1.0;
};

/// m ∈ {2..5}, |X| ∈ {2..10}, full-rank C, random bounded range; depends only on (seed, index).
inline TheoryInstance random_instance(std::uint64_t seed, std::size_t index) {
  Rng rng = substream(seed, "theory-instance", index);
  const int m = 2 + uniform_int(rng, 4);
  const std::size_t xs = 2 + static_cast<std::size_t>(uniform_int(rng, 9));
  TheoryInstance t{random_joint(xs, m, rng), random_joint(xs, m, rng), random_channel(m, rng)};
  t.c1 = -2.0 * uniform01(rng);
  t.c2 = t.c1 + 0.5 + 2.5 * uniform01(rng);
  return t;
}

namespace detail {

struct InstanceOutcome {
  double tv = 0.0, js = 0.0, thm2 = 0.0, identity = 0.0;
};

inline double worst_slack(const BoundReport& r) { return std::min(r.slack_lower, r.slack_upper); }

}  // namespace detail

/// Rows thm1.tv, thm1.js, thm2.bounded (slack ≥ −1e-9) and transform.identity
/// (|d(P̃,Q̃) − d_{C∘F}(P,Q)| ≤ 1e-10).
inline std::vector<SuiteRow> verify_bounds(std::size_t instances, std::uint64_t seed, unsigned workers = worker_count()) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<detail::InstanceOutcome> out(instances);
  parallel_for(
      instances,
      [&](std::size_t i) {
        const auto t = random_instance(seed, i);
        const auto d1 = check_thm1(t.P, t.Q, t.C);
        out[i].tv = detail::worst_slack(d1.tv);
        out[i].js = detail::worst_slack(d1.js);
        out[i].thm2 = detail::worst_slack(check_thm2_bounded(t.P, t.Q, t.C, t.c1, t.c2));
        const double noisy = bounded_class_distance(push_forward(t.P, t.C), push_forward(t.Q, t.C), t.c1, t.c2);
        out[i].identity = std::abs(noisy - transformed_distance(t.P, t.Q, t.C.matrix(), t.c1, t.c2));
      },
      workers);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::vector<SuiteRow> rows{{"thm1.tv"}, {"thm1.js"}, {"thm2.bounded"}, {"transform.identity"}};
  for (auto& r : rows) {
    r.total = instances;
    r.seconds = secs;
    r.worst = r.name == "transform.identity" ? 0.0 : std::numeric_limits<double>::infinity();
  }
  for (const auto& o : out) {
    const double slacks[] = {o.tv, o.js, o.thm2};
    for (int k = 0; k < 3; ++k) {
      rows[k].passed += slacks[k] >= -kBoundTolerance;
      rows[k].worst = std::min(rows[k].worst, slacks[k]);
    }
    rows[3].passed += o.identity <= kIdentityTolerance;
    rows[3].worst = std::max(rows[3].worst, o.identity);
  }
  return rows;
}

/// Rows tight.lower (clean = noisy distance) and tight.upper (clean distance =
/// |||C⁻¹|||_∞ · noisy distance) over random full-rank channels with m ∈ {2..6}.
inline std::vector<SuiteRow> verify_tightness(std::size_t channels, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<SuiteRow> rows{{"tight.lower"}, {"tight.upper"}};
  for (auto& r : rows) r.total = channels;
  for (std::size_t i = 0; i < channels; ++i) {
    Rng rng = substream(seed, "tightness", i);
    const auto C = random_channel(2 + uniform_int(rng, 5), rng);
    const double k = analyze(C).max_norm_inv;
    for (int s = 0; s < 2; ++s) {
      const auto side = s == 0 ? TightSide::Lower : TightSide::Upper;
      const auto w = witness_tight(C, 0.5 * max_witness_eps(C, side), side);
      const double clean = bounded_class_distance(w.P, w.Q, -1, 1);
      const double noisy = bounded_class_distance(push_forward(w.P, C), push_forward(w.Q, C), -1, 1);
      const double dev = s == 0 ? std::abs(clean - noisy) : std::abs(clean - k * noisy);
      rows[s].passed += dev <= kTightnessTolerance;
      rows[s].worst = std::max(rows[s].worst, dev);
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (auto& r : rows) r.seconds = secs;
  return rows;
}

inline void print_suite_table(std::ostream& os, const std::vector<SuiteRow>& rows) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-20s %-6s %12s %14s %9s\n", "check", "status", "passed", "worst", "seconds");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-20s %-6s %5zu/%-6zu %14.3e %9.3f\n", r.name.c_str(), r.ok() ? "PASS" : "FAIL",
                  r.passed, r.total, r.worst, r.seconds);
    os << buf;
  }
}

}  // namespace ncgl
