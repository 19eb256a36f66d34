#pragma once
// Finite-difference gradient checks for graphs built from the diffcomp ops.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ncgl/diffcomp/graph.hpp"
#include "ncgl/rng.hpp"

namespace ncgl {

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

inline Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Tensor t(r, c);
  for (double& v : t.values) v = scale * standard_normal(rng);
  return t;
}

/// Central differences against backward() for every parameter entry. Entries
/// whose perturbation crosses a kink (one-sided slopes disagree) are skipped.
inline GradCheck finite_difference_check(Graph& g, const TensorMap& inputs, TensorMap params, double delta = 1e-4) {
  g.forward(inputs, params);
  g.backward();
  const TensorMap analytic = g.parameter_gradients();
  GradCheck out;
  for (auto& [name, t] : params) {
    if (!analytic.count(name)) continue;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double orig = t.values[i];
      const double f0 = g.forward(inputs, params).values[0];
      t.values[i] = orig + delta;
      const double fp = g.forward(inputs, params).values[0];
      t.values[i] = orig - delta;
      const double fm = g.forward(inputs, params).values[0];
      t.values[i] = orig;
      const double right = (fp - f0) / delta, left = (f0 - fm) / delta;
      if (std::abs(right - left) > 1e-3 * (1.0 + std::abs(right) + std::abs(left))) continue;
      const double numeric = (fp - fm) / (2 * delta);
      const double a = analytic.at(name).values[i];
      const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a) + std::abs(numeric));
      out.max_rel_error = std::max(out.max_rel_error, rel);
      ++out.checked;
    }
  }
  return out;
}

inline const std::vector<std::string>& differentiable_ops() {
  static const std::vector<std::string> ops{"matmul",  "add_row",  "add_col",      "sub",         "mul",
                                            "relu",    "tanh",     "sigmoid",      "softplus",    "hinge",
                                            "affine",  "softmax_xent", "row_softmax", "squared_l2", "mean_batch",
                                            "sum_cols", "concat",  "transpose"};
  return ops;
}

/// One random instance of `op` followed by a random projection to a scalar so
/// every output entry contributes.
inline GradCheck check_op(const std::string& op, Rng& rng) {
  Graph g;
  const std::size_t B = 3, n = 4;
  const auto a = g.parameter("a", B, n);
  NodeId out = 0;
  TensorMap p{{"a", random_tensor(B, n, rng)}};
  TensorMap in;
  if (op == "matmul") {
    out = g.matmul(a, g.parameter("b", n, 2));
    p["b"] = random_tensor(n, 2, rng);
  } else if (op == "add_row") {
    out = g.add(a, g.parameter("b", 1, n));
    p["b"] = random_tensor(1, n, rng);
  } else if (op == "add_col") {
    out = g.add(g.parameter("b", B, 1), a);
    p["b"] = random_tensor(B, 1, rng);
  } else if (op == "sub") {
    out = g.sub(a, g.parameter("b", 1, n));
    p["b"] = random_tensor(1, n, rng);
  } else if (op == "mul") {
    out = g.mul(a, g.parameter("b", B, 1));
    p["b"] = random_tensor(B, 1, rng);
  } else if (op == "relu") {
    out = g.relu(a);
  } else if (op == "tanh") {
    out = g.tanh(a);
  } else if (op == "sigmoid") {
    out = g.sigmoid(a);
  } else if (op == "softplus") {
    out = g.softplus(a);
  } else if (op == "hinge") {
    out = g.hinge(a);
  } else if (op == "affine") {
    out = g.affine(a, -1.5, 0.25);
  } else if (op == "softmax_xent") {
    const auto t = g.input("t", B, 1);
    in["t"] = label_column({0, 3, 1});
    out = g.softmax_xent(a, t);
  } else if (op == "row_softmax") {
    out = g.row_softmax(a);
  } else if (op == "squared_l2") {
    out = g.squared_l2(a);
  } else if (op == "mean_batch") {
    out = g.mean_batch(a);
  } else if (op == "sum_cols") {
    out = g.sum_cols(a);
  } else if (op == "concat") {
    out = g.concat(a, g.parameter("b", B, 2));
    p["b"] = random_tensor(B, 2, rng);
  } else if (op == "transpose") {
    out = g.transpose(a);
  } else {
    throw InvalidArgument("check_op: unknown op '" + op + "'");
  }
  const std::size_t out_cols = g.node(out).cols;
  const auto proj = g.parameter("proj", out_cols, 1);
  p["proj"] = random_tensor(out_cols, 1, rng);
  g.squared_l2(g.add(g.matmul(out, proj), g.constant(Tensor::scalar(0.3))));
  return finite_difference_check(g, in, p);
}

/// Random MLP of the given depth (1..4) with mixed activations and a
/// cross-entropy head.
inline GradCheck check_random_composition(int depth, Rng& rng) {
  Graph g;
  const std::size_t B = 2 + static_cast<std::size_t>(uniform_int(rng, 3));
  std::size_t width = 2 + static_cast<std::size_t>(uniform_int(rng, 4));
  const auto x = g.input("x", B, width);
  TensorMap in{{"x", random_tensor(B, width, rng)}};
  TensorMap p;
  NodeId h = x;
  for (int l = 0; l < depth; ++l) {
    const std::size_t next = 2 + static_cast<std::size_t>(uniform_int(rng, 4));
    const std::string w = "W" + std::to_string(l), b = "b" + std::to_string(l);
    p[w] = random_tensor(width, next, rng, 0.8);
    p[b] = random_tensor(1, next, rng, 0.3);
    h = g.add(g.matmul(h, g.parameter(w, width, next)), g.parameter(b, 1, next));
    switch (uniform_int(rng, 5)) {
      case 0: h = g.relu(h); break;
      case 1: h = g.tanh(h); break;
      case 2: h = g.sigmoid(h); break;
      case 3: h = g.hinge(h); break;
      default: h = g.softplus(h); break;
    }
    width = next;
  }
  std::vector<int> targets(B);
  for (auto& t : targets) t = uniform_int(rng, static_cast<int>(width));
  in["t"] = label_column(targets);
  g.mean_batch(g.softmax_xent(h, g.input("t", B, 1)));
  return finite_difference_check(g, in, p);
}

}  // namespace ncgl
