#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "ncgl/error.hpp"
#include "ncgl/matrix.hpp"

namespace ncgl {

/// Exact joint distribution over a finite support {0..support_size-1} × {0..m-1}.
/// Support points carry no geometry; only the mass table matters.
class FiniteJoint {
 public:
  static constexpr double kMassTolerance = 1e-12;

  FiniteJoint() = default;

  explicit FiniteJoint(Matrix probs) : probs_(std::move(probs)) {
    if (probs_.rows() == 0 || probs_.cols() == 0) throw InvalidArgument("FiniteJoint: empty mass table");
    double total = 0.0;
    for (double p : probs_.data()) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidArgument("FiniteJoint: negative or non-finite mass");
      total += p;
    }
    if (std::abs(total - 1.0) > kMassTolerance)
      throw InvalidArgument("FiniteJoint: total mass " + std::to_string(total) + " differs from 1");
  }

  /// Normalizes a non-negative table to unit mass.
  static FiniteJoint normalized(Matrix weights) {
    double total = 0.0;
    for (double w : weights.data()) total += w;
    if (!(total > 0.0)) throw InvalidArgument("FiniteJoint::normalized: zero total weight");
    for (double& w : weights.data()) w /= total;
    // Absorb the final rounding error so the tolerance check always passes.
    double sum = 0.0;
    for (double w : weights.data()) sum += w;
    auto& d = weights.data();
    std::size_t largest = 0;
    for (std::size_t i = 1; i < d.size(); ++i)
      if (d[i] > d[largest]) largest = i;
    d[largest] += 1.0 - sum;
    return FiniteJoint(std::move(weights));
  }

  std::size_t support_size() const { return probs_.rows(); }
  std::size_t classes() const { return probs_.cols(); }

  double operator()(std::size_t x, std::size_t y) const { return probs_(x, y); }
  std::span<const double> at(std::size_t x) const { return probs_.row(x); }
  const Matrix& probs() const { return probs_; }

  double support_mass(std::size_t x) const {
    double s = 0.0;
    for (double p : at(x)) s += p;
    return s;
  }

  std::vector<double> label_marginal() const {
    std::vector<double> out(classes(), 0.0);
    for (std::size_t x = 0; x < support_size(); ++x)
      for (std::size_t y = 0; y < classes(); ++y) out[y] += probs_(x, y);
    return out;
  }

  bool same_shape(const FiniteJoint& other) const {
    return support_size() == other.support_size() && classes() == other.classes();
  }

  bool operator==(const FiniteJoint&) const = default;

 private:
  Matrix probs_;
};

inline void to_json(nlohmann::json& j, const FiniteJoint& P) {
  j = nlohmann::json{{"support", P.support_size()}, {"m", P.classes()}, {"probs", P.probs().to_rows()}};
}

inline void from_json(const nlohmann::json& j, FiniteJoint& P) {
  const auto support = j.at("support").get<std::size_t>();
  const auto m = j.at("m").get<std::size_t>();
  auto rows = j.at("probs").get<std::vector<std::vector<double>>>();
  Matrix probs = Matrix::from_rows(rows);
  if (probs.rows() != support || probs.cols() != m)
    throw InvalidArgument("FiniteJoint JSON: probs shape does not match support/m");
  P = FiniteJoint(std::move(probs));
}

}  // namespace ncgl
