#pragma once

// Reverse-mode differentiation over rank-2 tensors. A graph is built once for a
// given batch shape and then evaluated repeatedly with fresh inputs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ncgl/diffcomp/tensor.hpp"
#include "ncgl/error.hpp"

namespace ncgl {

using NodeId = std::size_t;

enum class OpKind {
  Input,
  Parameter,
  Constant,
  MatMul,
  Add,
  Sub,
  Mul,
  Relu,
  Tanh,
  Sigmoid,
  Softplus,
  Hinge,
  Affine,
  SoftmaxXent,
  RowSoftmax,
  SquaredL2,
  MeanBatch,
  SumCols,
  Concat,
  Transpose,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Input: return "input";
    case OpKind::Parameter: return "parameter";
    case OpKind::Constant: return "constant";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Relu: return "relu";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Softplus: return "softplus";
    case OpKind::Hinge: return "hinge";
    case OpKind::Affine: return "affine";
    case OpKind::SoftmaxXent: return "softmax_xent";
    case OpKind::RowSoftmax: return "row_softmax";
    case OpKind::SquaredL2: return "squared_l2";
    case OpKind::MeanBatch: return "mean_batch";
    case OpKind::SumCols: return "sum_cols";
    case OpKind::Concat: return "concat";
    case OpKind::Transpose: return "transpose";
  }
  return "?";
}

/// φ(a) = max(0, 1 − 2a).
inline double hinge(double a) { return std::max(0.0, 1.0 - 2.0 * a); }

class Graph {
 public:
  struct Node {
    OpKind op;
    NodeId a = 0;
    NodeId b = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::string name;  // leaves only
    double scale = 1.0;
    double shift = 0.0;
    std::vector<double> value;
    std::vector<double> grad;
  };

  NodeId input(const std::string& name, std::size_t rows, std::size_t cols) {
    return leaf(OpKind::Input, name, rows, cols);
  }

  /// Parameters are looked up by name at forward time; declaring the same name
  /// twice returns the existing node so gradients accumulate in one place.
  NodeId parameter(const std::string& name, std::size_t rows, std::size_t cols) {
    for (NodeId i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      if (n.op == OpKind::Parameter && n.name == name) {
        if (n.rows != rows || n.cols != cols)
          throw InvalidArgument("parameter '" + name + "' redeclared with a different shape");
        return i;
      }
    }
    return leaf(OpKind::Parameter, name, rows, cols);
  }

  NodeId constant(const Tensor& t) {
    const NodeId id = leaf(OpKind::Constant, "", t.rows(), t.cols());
    nodes_[id].value = t.values;
    return id;
  }

  NodeId matmul(NodeId a, NodeId b) {
    check(a, b);
    if (nodes_[a].cols != nodes_[b].rows)
      fail("matmul", "inner dimensions " + dims(a) + " and " + dims(b) + " differ");
    return push(OpKind::MatMul, a, b, nodes_[a].rows, nodes_[b].cols);
  }

  /// Elementwise with broadcasting: each dimension must match or be 1 on either side.
  NodeId add(NodeId a, NodeId b) { return broadcast_op(OpKind::Add, a, b); }
  NodeId sub(NodeId a, NodeId b) { return broadcast_op(OpKind::Sub, a, b); }
  NodeId mul(NodeId a, NodeId b) { return broadcast_op(OpKind::Mul, a, b); }

  NodeId relu(NodeId a) { return unary(OpKind::Relu, a); }
  NodeId tanh(NodeId a) { return unary(OpKind::Tanh, a); }
  NodeId sigmoid(NodeId a) { return unary(OpKind::Sigmoid, a); }
  NodeId softplus(NodeId a) { return unary(OpKind::Softplus, a); }
  NodeId hinge(NodeId a) { return unary(OpKind::Hinge, a); }

  /// scale·a + shift.
  NodeId affine(NodeId a, double scale, double shift) {
    const NodeId id = unary(OpKind::Affine, a);
    nodes_[id].scale = scale;
    nodes_[id].shift = shift;
    return id;
  }

  /// Per-row cross-entropy of softmax(logits) against integer targets given as
  /// a column node; returns a batch×1 column.
  NodeId softmax_xent(NodeId logits, NodeId targets) {
    check(logits, targets);
    if (nodes_[targets].cols != 1 || nodes_[targets].rows != nodes_[logits].rows)
      fail("softmax_xent", "targets " + dims(targets) + " do not match logits " + dims(logits));
    return push(OpKind::SoftmaxXent, logits, targets, nodes_[logits].rows, 1);
  }

  NodeId row_softmax(NodeId a) { return unary(OpKind::RowSoftmax, a); }

  /// Sum of squares of all entries, 1×1.
  NodeId squared_l2(NodeId a) {
    check(a);
    return push(OpKind::SquaredL2, a, a, 1, 1);
  }

  /// Column means over the batch, 1×cols.
  NodeId mean_batch(NodeId a) {
    check(a);
    return push(OpKind::MeanBatch, a, a, 1, nodes_[a].cols);
  }

  /// Row sums, rows×1.
  NodeId sum_cols(NodeId a) {
    check(a);
    return push(OpKind::SumCols, a, a, nodes_[a].rows, 1);
  }

  /// Column-wise concatenation [a | b].
  NodeId concat(NodeId a, NodeId b) {
    check(a, b);
    if (nodes_[a].rows != nodes_[b].rows) fail("concat", "row counts of " + dims(a) + " and " + dims(b) + " differ");
    return push(OpKind::Concat, a, b, nodes_[a].rows, nodes_[a].cols + nodes_[b].cols);
  }

  NodeId transpose(NodeId a) {
    check(a);
    return push(OpKind::Transpose, a, a, nodes_[a].cols, nodes_[a].rows);
  }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_.at(id); }

  /// Evaluates every node; returns the value of the last node.
  Tensor forward(const TensorMap& inputs, const TensorMap& params = {}) {
    if (nodes_.empty()) throw InvalidArgument("forward: empty graph");
    for (NodeId id = 0; id < nodes_.size(); ++id) evaluate(id, inputs, params);
    return value(nodes_.size() - 1);
  }

  /// Reverse accumulation from the last node, which must be 1×1.
  void backward() {
    if (nodes_.empty()) throw InvalidArgument("backward: empty graph");
    const NodeId out = nodes_.size() - 1;
    if (nodes_[out].rows != 1 || nodes_[out].cols != 1)
      throw InvalidArgument("backward: loss node " + std::to_string(out) + " has shape " + dims(out) +
                            ", expected a scalar");
    if (nodes_[out].value.empty()) throw InvalidArgument("backward: forward has not run");
    for (Node& n : nodes_) n.grad.assign(n.rows * n.cols, 0.0);
    nodes_[out].grad[0] = 1.0;
    for (NodeId id = out + 1; id-- > 0;) propagate(id);
  }

  Tensor value(NodeId id) const {
    const Node& n = nodes_.at(id);
    return Tensor::matrix(n.rows, n.cols, n.value);
  }

  Tensor grad(NodeId id) const {
    const Node& n = nodes_.at(id);
    return Tensor::matrix(n.rows, n.cols, n.grad);
  }

  TensorMap parameter_gradients() const {
    TensorMap out;
    for (const Node& n : nodes_)
      if (n.op == OpKind::Parameter) out[n.name] = Tensor::matrix(n.rows, n.cols, n.grad);
    return out;
  }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> out;
    for (const Node& n : nodes_)
      if (n.op == OpKind::Parameter) out.push_back(n.name);
    return out;
  }

 private:
  std::vector<Node> nodes_;

  std::string dims(NodeId id) const {
    return std::to_string(nodes_[id].rows) + "x" + std::to_string(nodes_[id].cols);
  }

  [[noreturn]] void fail(const char* op, const std::string& msg) const {
    throw InvalidArgument("node " + std::to_string(nodes_.size()) + " (" + op + "): " + msg);
  }

  void check(NodeId a) const {
    if (a >= nodes_.size()) throw InvalidArgument("node " + std::to_string(a) + " does not exist");
  }
  void check(NodeId a, NodeId b) const {
    check(a);
    check(b);
  }

  NodeId leaf(OpKind op, const std::string& name, std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) fail(op_name(op), "'" + name + "' must have non-zero dimensions");
    Node n{op};
    n.rows = rows;
    n.cols = cols;
    n.name = name;
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  NodeId push(OpKind op, NodeId a, NodeId b, std::size_t rows, std::size_t cols) {
    Node n{op, a, b, rows, cols};
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  NodeId unary(OpKind op, NodeId a) {
    check(a);
    return push(op, a, a, nodes_[a].rows, nodes_[a].cols);
  }

  NodeId broadcast_op(OpKind op, NodeId a, NodeId b) {
    check(a, b);
    const Node &na = nodes_[a], &nb = nodes_[b];
    auto merge = [&](std::size_t x, std::size_t y) -> std::size_t {
      if (x == y || y == 1) return x;
      if (x == 1) return y;
      fail(op_name(op), "cannot broadcast " + dims(a) + " with " + dims(b));
    };
    return push(op, a, b, merge(na.rows, nb.rows), merge(na.cols, nb.cols));
  }

  void load_leaf(Node& n, NodeId id, const TensorMap& source, const char* kind) {
    const auto it = source.find(n.name);
    if (it == source.end())
      throw InvalidArgument("node " + std::to_string(id) + ": missing " + kind + " '" + n.name + "'");
    const Tensor& t = it->second;
    if (t.rows() != n.rows || t.cols() != n.cols || t.size() != n.rows * n.cols)
      throw InvalidArgument("node " + std::to_string(id) + ": " + kind + " '" + n.name + "' has shape " +
                            t.shape_string() + ", expected " + dims(id));
    n.value = t.values;
  }

  // Index of the broadcast operand element feeding output (i, j).
  static std::size_t bindex(const Node& src, std::size_t i, std::size_t j) {
    return (src.rows == 1 ? 0 : i) * src.cols + (src.cols == 1 ? 0 : j);
  }

  void evaluate(NodeId id, const TensorMap& inputs, const TensorMap& params) {
    Node& n = nodes_[id];
    if (n.op == OpKind::Constant) return;
    if (n.op == OpKind::Input) return load_leaf(n, id, inputs, "input");
    if (n.op == OpKind::Parameter) return load_leaf(n, id, params, "parameter");

    const Node& A = nodes_[n.a];
    const Node& B = nodes_[n.b];
    const auto& a = A.value;
    auto& out = n.value;
    out.assign(n.rows * n.cols, 0.0);
    switch (n.op) {
      case OpKind::MatMul: {
        const std::size_t K = A.cols;
        for (std::size_t i = 0; i < n.rows; ++i)
          for (std::size_t k = 0; k < K; ++k) {
            const double aik = a[i * K + k];
            if (aik == 0.0) continue;
            const double* brow = &B.value[k * n.cols];
            double* orow = &out[i * n.cols];
            for (std::size_t j = 0; j < n.cols; ++j) orow[j] += aik * brow[j];
          }
        break;
      }
      case OpKind::Add:
      case OpKind::Sub:
      case OpKind::Mul:
        for (std::size_t i = 0; i < n.rows; ++i)
          for (std::size_t j = 0; j < n.cols; ++j) {
            const double x = a[bindex(A, i, j)], y = B.value[bindex(B, i, j)];
            out[i * n.cols + j] = n.op == OpKind::Add ? x + y : n.op == OpKind::Sub ? x - y : x * y;
          }
        break;
      case OpKind::Relu:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
        break;
      case OpKind::Tanh:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a[i]);
        break;
      case OpKind::Sigmoid:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a[i]));
        break;
      case OpKind::Softplus:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(a[i], 0.0) + std::log1p(std::exp(-std::abs(a[i])));
        break;
      case OpKind::Hinge:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = ncgl::hinge(a[i]);
        break;
      case OpKind::Affine:
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = n.scale * a[i] + n.shift;
        break;
      case OpKind::SoftmaxXent:
        for (std::size_t i = 0; i < n.rows; ++i) {
          const double* z = &a[i * A.cols];
          const double t = B.value[i];
          const auto target = static_cast<std::size_t>(t);
          if (t < 0 || static_cast<double>(target) != t || target >= A.cols)
            throw InvalidArgument("node " + std::to_string(id) + " (softmax_xent): target " + std::to_string(t) +
                                  " outside [0," + std::to_string(A.cols) + ")");
          const double mx = *std::max_element(z, z + A.cols);
          double s = 0.0;
          for (std::size_t j = 0; j < A.cols; ++j) s += std::exp(z[j] - mx);
          out[i] = mx + std::log(s) - z[target];
        }
        break;
      case OpKind::RowSoftmax:
        for (std::size_t i = 0; i < n.rows; ++i) {
          const double* z = &a[i * n.cols];
          double* o = &out[i * n.cols];
          const double mx = *std::max_element(z, z + n.cols);
          double s = 0.0;
          for (std::size_t j = 0; j < n.cols; ++j) s += (o[j] = std::exp(z[j] - mx));
          for (std::size_t j = 0; j < n.cols; ++j) o[j] /= s;
        }
        break;
      case OpKind::SquaredL2: {
        double s = 0.0;
        for (double v : a) s += v * v;
        out[0] = s;
        break;
      }
      case OpKind::MeanBatch:
        for (std::size_t i = 0; i < A.rows; ++i)
          for (std::size_t j = 0; j < A.cols; ++j) out[j] += a[i * A.cols + j];
        for (double& v : out) v /= static_cast<double>(A.rows);
        break;
      case OpKind::SumCols:
        for (std::size_t i = 0; i < A.rows; ++i)
          for (std::size_t j = 0; j < A.cols; ++j) out[i] += a[i * A.cols + j];
        break;
      case OpKind::Concat:
        for (std::size_t i = 0; i < n.rows; ++i) {
          std::copy_n(&a[i * A.cols], A.cols, &out[i * n.cols]);
          std::copy_n(&B.value[i * B.cols], B.cols, &out[i * n.cols + A.cols]);
        }
        break;
      case OpKind::Transpose:
        for (std::size_t i = 0; i < A.rows; ++i)
          for (std::size_t j = 0; j < A.cols; ++j) out[j * A.rows + i] = a[i * A.cols + j];
        break;
      default:
        break;
    }
  }

  void propagate(NodeId id) {
    Node& n = nodes_[id];
    if (n.op == OpKind::Input || n.op == OpKind::Parameter || n.op == OpKind::Constant) return;
    const auto& g = n.grad;
    Node& A = nodes_[n.a];
    Node& B = nodes_[n.b];
    const auto& a = A.value;
    auto& ga = A.grad;
    switch (n.op) {
      case OpKind::MatMul: {
        const std::size_t K = A.cols;
        for (std::size_t i = 0; i < n.rows; ++i)
          for (std::size_t k = 0; k < K; ++k) {
            const double* brow = &B.value[k * n.cols];
            const double* grow = &g[i * n.cols];
            double acc = 0.0;
            for (std::size_t j = 0; j < n.cols; ++j) acc += grow[j] * brow[j];
            ga[i * K + k] += acc;
            const double aik = a[i * K + k];
            if (aik == 0.0) continue;
            double* gbrow = &B.grad[k * n.cols];
            for (std::size_t j = 0; j < n.cols; ++j) gbrow[j] += aik * grow[j];
          }
        break;
      }
      case OpKind::Add:
      case OpKind::Sub:
      case OpKind::Mul:
        for (std::size_t i = 0; i < n.rows; ++i)
          for (std::size_t j = 0; j < n.cols; ++j) {
            const double gij = g[i * n.cols + j];
            const std::size_t ia = bindex(A, i, j), ib = bindex(B, i, j);
            if (n.op == OpKind::Mul) {
              const double bv = B.value[ib];
              ga[ia] += gij * bv;
              B.grad[ib] += gij * a[ia];
            } else {
              ga[ia] += gij;
              B.grad[ib] += n.op == OpKind::Add ? gij : -gij;
            }
          }
        break;
      case OpKind::Relu:
        for (std::size_t i = 0; i < g.size(); ++i)
          if (a[i] > 0.0) ga[i] += g[i];
        break;
      case OpKind::Tanh:
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
        break;
      case OpKind::Sigmoid:
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
        break;
      case OpKind::Softplus:
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / (1.0 + std::exp(-a[i]));
        break;
      case OpKind::Hinge:
        for (std::size_t i = 0; i < g.size(); ++i)
          if (a[i] < 0.5) ga[i] -= 2.0 * g[i];
        break;
      case OpKind::Affine:
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.scale * g[i];
        break;
      case OpKind::SoftmaxXent:
        for (std::size_t i = 0; i < n.rows; ++i) {
          const double* z = &a[i * A.cols];
          const auto target = static_cast<std::size_t>(B.value[i]);
          const double mx = *std::max_element(z, z + A.cols);
          double s = 0.0;
          for (std::size_t j = 0; j < A.cols; ++j) s += std::exp(z[j] - mx);
          for (std::size_t j = 0; j < A.cols; ++j) {
            const double p = std::exp(z[j] - mx) / s;
            ga[i * A.cols + j] += g[i] * (p - (j == target ? 1.0 : 0.0));
          }
        }
        break;
      case OpKind::RowSoftmax:
        for (std::size_t i = 0; i < n.rows; ++i) {
          const double* s = &n.value[i * n.cols];
          const double* gr = &g[i * n.cols];
          double dot = 0.0;
          for (std::size_t j = 0; j < n.cols; ++j) dot += gr[j] * s[j];
          for (std::size_t j = 0; j < n.cols; ++j) ga[i * n.cols + j] += s[j] * (gr[j] - dot);
        }
        break;
      case OpKind::SquaredL2:
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += 2.0 * a[i] * g[0];
        break;
      case OpKind::MeanBatch:
        for (std::size_t i = 0; i < A.rows; ++i)
          for (std::size_t j = 0; j < A.cols; ++j) ga[i * A.cols + j] += g[j] / static_cast<double>(A.rows);
        break;
      case OpKind::SumCols:
        for (std::size_t i = 0; i < A.rows; ++i)
          for (std::size_t j = 0; j < A.cols; ++j) ga[i * A.cols + j] += g[i];
        break;
      case OpKind::Concat:
        for (std::size_t i = 0; i < n.rows; ++i) {
          for (std::size_t j = 0; j < A.cols; ++j) ga[i * A.cols + j] += g[i * n.cols + j];
          for (std::size_t j = 0; j < B.cols; ++j) B.grad[i * B.cols + j] += g[i * n.cols + A.cols + j];
        }
        break;
      case OpKind::Transpose:
        for (std::size_t i = 0; i < A.rows; ++i)
          for (std::size_t j = 0; j < A.cols; ++j) ga[i * A.cols + j] += g[j * A.rows + i];
        break;
      default:
        break;
    }
  }
};

}  // namespace ncgl
