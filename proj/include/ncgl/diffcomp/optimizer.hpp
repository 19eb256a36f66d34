#pragma once

#include <cmath>
#include <string>

#include "ncgl/diffcomp/tensor.hpp"
#include "ncgl/error.hpp"

namespace ncgl {

enum class OptimizerKind { SGD, Adam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  TensorMap m;
  TensorMap v;
};

inline OptimizerState make_sgd(double lr) { return {OptimizerKind::SGD, lr}; }
inline OptimizerState make_adam(double lr, double beta1 = 0.9, double beta2 = 0.999) {
  return {OptimizerKind::Adam, lr, beta1, beta2};
}

/// Updates every parameter that has a gradient entry. Parameters without a
/// gradient are left untouched. The step is rejected as a whole on NaN.
inline void optimizer_step(TensorMap& params, const TensorMap& grads, OptimizerState& state) {
  for (const auto& [name, g] : grads) {
    const auto it = params.find(name);
    if (it == params.end()) throw InvalidArgument("optimizer_step: gradient for unknown parameter '" + name + "'");
    if (it->second.size() != g.size())
      throw InvalidArgument("optimizer_step: gradient for '" + name + "' has shape " + g.shape_string() +
                            ", parameter has " + it->second.shape_string());
    for (double x : g.values)
      if (std::isnan(x)) throw NumericError("optimizer_step: NaN gradient for '" + name + "'");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    if (state.kind == OptimizerKind::SGD) {
      for (std::size_t i = 0; i < p.size(); ++i) p.values[i] -= state.lr * g.values[i];
      continue;
    }
    Tensor& m = state.m[name];
    Tensor& v = state.v[name];
    if (m.size() != p.size()) m = Tensor(p.shape, std::vector<double>(p.size(), 0.0));
    if (v.size() != p.size()) v = Tensor(p.shape, std::vector<double>(p.size(), 0.0));
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g.values[i];
      m.values[i] = state.beta1 * m.values[i] + (1.0 - state.beta1) * gi;
      v.values[i] = state.beta2 * v.values[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = m.values[i] / bc1;
      const double vhat = v.values[i] / bc2;
      p.values[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace ncgl
