#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "ncgl/error.hpp"

namespace ncgl {

/// Dense row-major tensor of doubles. Graph ops work on rank-2 tensors.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0) : shape{rows, cols}, values(rows * cols, fill) {}
  Tensor(std::vector<std::size_t> dims, std::vector<double> vals) : shape(std::move(dims)), values(std::move(vals)) {
    if (element_count(shape) != values.size())
      throw InvalidArgument("Tensor: " + std::to_string(values.size()) + " values do not fill shape " + shape_string());
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> vals) {
    return Tensor({rows, cols}, std::move(vals));
  }
  static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }

  static std::size_t element_count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return values.size(); }
  std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return shape.size() == 2 ? shape[1] : size(); }

  double& operator()(std::size_t i, std::size_t j) { return values[i * cols() + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * cols() + j]; }

  std::string shape_string() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
    return s + ")";
  }

  bool operator==(const Tensor&) const = default;
};

using TensorMap = std::map<std::string, Tensor>;

/// Batch of one-hot rows for the given labels.
inline Tensor one_hot(const std::vector<int>& labels, int m) {
  Tensor t(labels.size(), static_cast<std::size_t>(m));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= m)
      throw InvalidArgument("one_hot: label " + std::to_string(labels[i]) + " outside [0," + std::to_string(m) + ")");
    t(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return t;
}

/// Labels stored as a column of doubles, the layout expected by softmax_xent.
inline Tensor label_column(const std::vector<int>& labels) {
  Tensor t(labels.size(), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) t.values[i] = labels[i];
  return t;
}

}  // namespace ncgl
