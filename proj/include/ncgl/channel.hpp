#pragma once

// Label-noise channels given by row-stochastic confusion matrices:
// construction, sampling, inversion and push-forward of joint distributions.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ncgl/error.hpp"
#include "ncgl/finite_joint.hpp"
#include "ncgl/matrix.hpp"
#include "ncgl/rng.hpp"

namespace ncgl {

/// Row-stochastic m×m matrix; entry (i, j) is P(noisy label = j | clean label = i).
class ConfusionMatrix {
 public:
  static constexpr double kRowSumTolerance = 1e-12;

  ConfusionMatrix() = default;

  explicit ConfusionMatrix(Matrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() == 0 || entries_.rows() != entries_.cols())
      throw InvalidArgument("ConfusionMatrix: must be square and non-empty");
    const std::size_t m = entries_.rows();
    cdf_.assign(m * m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double c = entries_(i, j);
        if (!(c >= 0.0 && c <= 1.0))
          throw InvalidArgument("ConfusionMatrix: entry (" + std::to_string(i) + "," + std::to_string(j) +
                                ") outside [0,1]");
        acc += c;
        cdf_[i * m + j] = acc;
      }
      if (std::abs(acc - 1.0) > kRowSumTolerance)
        throw InvalidArgument("ConfusionMatrix: row " + std::to_string(i) + " sums to " + std::to_string(acc));
    }
  }

  static ConfusionMatrix identity(int m) { return ConfusionMatrix(Matrix::identity(static_cast<std::size_t>(m))); }

  int classes() const { return static_cast<int>(entries_.rows()); }
  double operator()(std::size_t i, std::size_t j) const { return entries_(i, j); }
  std::span<const double> row(std::size_t i) const { return entries_.row(i); }
  std::span<const double> cumulative_row(std::size_t i) const {
    const std::size_t m = entries_.rows();
    return {cdf_.data() + i * m, m};
  }
  const Matrix& matrix() const { return entries_; }

  bool operator==(const ConfusionMatrix& o) const { return entries_ == o.entries_; }

 private:
  Matrix entries_;
  std::vector<double> cdf_;
};

struct ChannelAnalysis {
  std::optional<Matrix> inverse;
  /// |||C⁻¹|||_∞; +infinity when C is numerically singular.
  double max_norm_inv = std::numeric_limits<double>::infinity();
  bool is_full_rank = false;
  /// Each diagonal entry strictly exceeds every other entry of its row.
  bool is_diagonally_dominant = false;
};

/// Uniform flipping: keep the label with probability `pi`, otherwise move it
/// uniformly to one of the other m-1 labels.
inline ConfusionMatrix make_uniform_flip(int m, double pi) {
  if (m < 2) throw InvalidArgument("make_uniform_flip: need m >= 2");
  if (!(pi >= 0.0 && pi <= 1.0)) throw InvalidArgument("make_uniform_flip: pi outside [0,1]");
  const double off = (1.0 - pi) / (m - 1);
  Matrix C(m, m, off);
  for (int i = 0; i < m; ++i) C(i, i) = pi;
  return ConfusionMatrix(std::move(C));
}

inline constexpr double kSingularPivot = 1e-12;

inline ChannelAnalysis analyze(const ConfusionMatrix& C) {
  ChannelAnalysis out;
  const auto m = static_cast<std::size_t>(C.classes());
  out.is_diagonally_dominant = true;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (j != i && !(C(i, i) > C(i, j))) out.is_diagonally_dominant = false;

  out.inverse = invert(C.matrix(), kSingularPivot);
  out.is_full_rank = out.inverse.has_value();
  if (out.is_full_rank) out.max_norm_inv = max_row_abs_sum(*out.inverse);
  return out;
}

/// Draws a corrupted label from row `y` of C by inverse-CDF lookup.
inline int corrupt(int y, const ConfusionMatrix& C, Rng& rng) {
  if (y < 0 || y >= C.classes())
    throw InvalidArgument("corrupt: label " + std::to_string(y) + " outside [0," + std::to_string(C.classes()) + ")");
  const auto cdf = C.cumulative_row(static_cast<std::size_t>(y));
  const double u = uniform01(rng);
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  // Rounding can leave the last cumulative entry a hair under 1.
  if (it == cdf.end()) {
    --it;
    while (it != cdf.begin() && C(y, static_cast<std::size_t>(it - cdf.begin())) == 0.0) --it;
  }
  return static_cast<int>(it - cdf.begin());
}

/// P̃(x, ỹ) = Σ_y P(x, y) C[y][ỹ].
inline FiniteJoint push_forward(const FiniteJoint& P, const ConfusionMatrix& C) {
  if (P.classes() != static_cast<std::size_t>(C.classes()))
    throw InvalidArgument("push_forward: joint has " + std::to_string(P.classes()) + " labels, channel has " +
                          std::to_string(C.classes()));
  return FiniteJoint(P.probs() * C.matrix());
}

inline void to_json(nlohmann::json& j, const ConfusionMatrix& C) {
  j = nlohmann::json{{"m", C.classes()}, {"rows", C.matrix().to_rows()}};
}

inline void from_json(const nlohmann::json& j, ConfusionMatrix& C) {
  const int m = j.at("m").get<int>();
  Matrix rows = Matrix::from_rows(j.at("rows").get<std::vector<std::vector<double>>>());
  if (static_cast<int>(rows.rows()) != m || static_cast<int>(rows.cols()) != m)
    throw InvalidArgument("ConfusionMatrix JSON: rows do not form an m×m matrix");
  C = ConfusionMatrix(std::move(rows));
}

}  // namespace ncgl
