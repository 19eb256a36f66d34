#pragma once

// Generator, projection discriminator and classifier networks as graph
// builders over named parameter maps, plus constraint projection and
// classifier training.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ncgl/diffcomp/graph.hpp"
#include "ncgl/diffcomp/optimizer.hpp"
#include "ncgl/diffcomp/tensor.hpp"
#include "ncgl/error.hpp"
#include "ncgl/rng.hpp"

namespace ncgl {

struct GeneratorArch {
  int m = 3;
  std::size_t latent_dim = 4;
  std::size_t d_x = 2;
  std::vector<std::size_t> hidden{32, 32};
};

struct DiscArch {
  int m = 3;
  std::size_t d_x = 2;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t d_V = 64;
  std::size_t d_v = 64;
  bool concat_y = false;
  bool projection = true;  // false: single unconstrained head, label enters only through concat_y
};

struct ClassifierArch {
  std::size_t d_in = 2;
  int m = 3;
  std::vector<std::size_t> hidden;
};

struct GeneratorParams {
  GeneratorArch arch;
  TensorMap weights;  // "gen/..."
};

struct ProjDiscParams {
  DiscArch arch;
  TensorMap weights;  // "disc/..."
};

struct ClassifierParams {
  ClassifierArch arch;
  TensorMap weights;
  std::string prefix = "clf/";
};

inline void to_json(nlohmann::json& j, const GeneratorArch& a) {
  j = {{"m", a.m}, {"latent_dim", a.latent_dim}, {"d_x", a.d_x}, {"hidden", a.hidden}};
}
inline void from_json(const nlohmann::json& j, GeneratorArch& a) {
  a.m = j.value("m", a.m);
  a.latent_dim = j.value("latent_dim", a.latent_dim);
  a.d_x = j.value("d_x", a.d_x);
  a.hidden = j.value("hidden", a.hidden);
}
inline void to_json(nlohmann::json& j, const DiscArch& a) {
  j = {{"m", a.m},     {"d_x", a.d_x},           {"hidden", a.hidden},         {"d_V", a.d_V},
       {"d_v", a.d_v}, {"concat_y", a.concat_y}, {"projection", a.projection}};
}
inline void from_json(const nlohmann::json& j, DiscArch& a) {
  a.m = j.value("m", a.m);
  a.d_x = j.value("d_x", a.d_x);
  a.hidden = j.value("hidden", a.hidden);
  a.d_V = j.value("d_V", a.d_V);
  a.d_v = j.value("d_v", a.d_v);
  a.concat_y = j.value("concat_y", a.concat_y);
  a.projection = j.value("projection", a.projection);
}
inline void to_json(nlohmann::json& j, const ClassifierArch& a) {
  j = {{"d_in", a.d_in}, {"m", a.m}, {"hidden", a.hidden}};
}
inline void from_json(const nlohmann::json& j, ClassifierArch& a) {
  a.d_in = j.value("d_in", a.d_in);
  a.m = j.value("m", a.m);
  a.hidden = j.value("hidden", a.hidden);
}

namespace detail {

inline void init_dense(TensorMap& out, const std::string& w, const std::string& b, std::size_t fan_in,
                       std::size_t fan_out, std::uint64_t seed) {
  Rng rng = substream(seed, w);
  Tensor W(fan_in, fan_out);
  const double scale = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : W.values) v = scale * standard_normal(rng);
  out[w] = std::move(W);
  if (!b.empty()) out[b] = Tensor(1, fan_out);
}

/// Dense stack: hidden layers with the given activation, linear last layer
/// when out > 0. Returns the last node.
template <typename Act>
NodeId build_mlp(Graph& g, NodeId in, std::size_t in_dim, const std::vector<std::size_t>& hidden, std::size_t out,
                 const std::string& prefix, Act act) {
  NodeId h = in;
  std::size_t width = in_dim;
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    const std::string s = std::to_string(l);
    h = g.add(g.matmul(h, g.parameter(prefix + "W" + s, width, hidden[l])), g.parameter(prefix + "b" + s, 1, hidden[l]));
    h = act(g, h);
    width = hidden[l];
  }
  if (out > 0) {
    h = g.add(g.matmul(h, g.parameter(prefix + "Wout", width, out)), g.parameter(prefix + "bout", 1, out));
  }
  return h;
}

inline void init_mlp(TensorMap& out, std::size_t in_dim, const std::vector<std::size_t>& hidden, std::size_t out_dim,
                     const std::string& prefix, std::uint64_t seed) {
  std::size_t width = in_dim;
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    const std::string s = std::to_string(l);
    init_dense(out, prefix + "W" + s, prefix + "b" + s, width, hidden[l], seed);
    width = hidden[l];
  }
  if (out_dim > 0) init_dense(out, prefix + "Wout", prefix + "bout", width, out_dim, seed);
}

inline std::size_t trunk_width(const DiscArch& a) { return a.hidden.empty() ? a.d_x + (a.concat_y ? a.m : 0) : a.hidden.back(); }

}  // namespace detail

// Generator: x = MLP_tanh([z | onehot(y)]).

inline GeneratorParams init_generator(const GeneratorArch& arch, std::uint64_t seed) {
  GeneratorParams p{arch, {}};
  detail::init_mlp(p.weights, arch.latent_dim + static_cast<std::size_t>(arch.m), arch.hidden, arch.d_x, "gen/", seed);
  return p;
}

inline NodeId build_generator(Graph& g, const GeneratorArch& arch, NodeId z, NodeId onehot) {
  return detail::build_mlp(g, g.concat(z, onehot), arch.latent_dim + static_cast<std::size_t>(arch.m), arch.hidden,
                           arch.d_x, "gen/", [](Graph& gg, NodeId h) { return gg.tanh(h); });
}

/// G(z; y) for a batch of latent rows and labels.
inline Tensor generate(const GeneratorParams& G, const Tensor& z, const std::vector<int>& labels) {
  if (z.rows() != labels.size() || z.cols() != G.arch.latent_dim)
    throw InvalidArgument("generate: latent batch shape " + z.shape_string() + " does not match labels/latent_dim");
  Graph g;
  build_generator(g, G.arch, g.input("z", z.rows(), z.cols()), g.input("y", labels.size(), static_cast<std::size_t>(G.arch.m)));
  return g.forward({{"z", z}, {"y", one_hot(labels, G.arch.m)}}, G.weights);
}

inline Tensor sample_latent(std::size_t n, std::size_t dim, Rng& rng) {
  Tensor z(n, dim);
  for (double& v : z.values) v = standard_normal(rng);
  return z;
}

// Discriminator: D(x, y) = onehot(y)ᵀ V ψ(x) + vᵀ ψ'(x), with ψ, ψ' linear heads on
// a shared ReLU trunk. Parameters: trunk "disc/W*", heads "disc/Wpsi", "disc/Wpsi2",
// "disc/V" (m × d_V) and "disc/v" (d_v × 1).

inline ProjDiscParams init_discriminator(const DiscArch& arch, std::uint64_t seed) {
  ProjDiscParams p{arch, {}};
  const std::size_t in = arch.d_x + (arch.concat_y ? static_cast<std::size_t>(arch.m) : 0);
  detail::init_mlp(p.weights, in, arch.hidden, 0, "disc/", seed);
  const std::size_t w = detail::trunk_width(arch);
  detail::init_dense(p.weights, "disc/Wpsi2", "disc/bpsi2", w, arch.d_v, seed);
  Rng rng = substream(seed, "disc/v");
  Tensor v(arch.d_v, 1);
  for (double& e : v.values) e = standard_normal(rng) / std::sqrt(static_cast<double>(arch.d_v));
  p.weights["disc/v"] = v;
  if (arch.projection) {
    detail::init_dense(p.weights, "disc/Wpsi", "disc/bpsi", w, arch.d_V, seed);
    Rng rv = substream(seed, "disc/V");
    Tensor V(static_cast<std::size_t>(arch.m), arch.d_V);
    for (double& e : V.values) e = 0.1 * standard_normal(rv);
    p.weights["disc/V"] = V;
  }
  return p;
}

namespace detail {

inline NodeId disc_trunk(Graph& g, const DiscArch& arch, NodeId x, NodeId onehot) {
  NodeId in = x;
  std::size_t in_dim = arch.d_x;
  if (arch.concat_y) {
    in = g.concat(x, onehot);
    in_dim += static_cast<std::size_t>(arch.m);
  }
  return build_mlp(g, in, in_dim, arch.hidden, 0, "disc/", [](Graph& gg, NodeId h) { return gg.relu(h); });
}

inline NodeId disc_unlabeled_term(Graph& g, const DiscArch& arch, NodeId trunk) {
  const std::size_t w = trunk_width(arch);
  const NodeId psi2 = g.add(g.matmul(trunk, g.parameter("disc/Wpsi2", w, arch.d_v)), g.parameter("disc/bpsi2", 1, arch.d_v));
  return g.matmul(psi2, g.parameter("disc/v", arch.d_v, 1));
}

// Vψ(x) for every label: batch × m.
inline NodeId disc_label_scores(Graph& g, const DiscArch& arch, NodeId trunk) {
  const std::size_t w = trunk_width(arch);
  const NodeId psi = g.add(g.matmul(trunk, g.parameter("disc/Wpsi", w, arch.d_V)), g.parameter("disc/bpsi", 1, arch.d_V));
  return g.matmul(psi, g.transpose(g.parameter("disc/V", static_cast<std::size_t>(arch.m), arch.d_V)));
}

}  // namespace detail

/// D(x, y) as a batch × 1 column; `onehot` carries y.
inline NodeId build_discriminator(Graph& g, const DiscArch& arch, NodeId x, NodeId onehot) {
  const NodeId trunk = detail::disc_trunk(g, arch, x, onehot);
  const NodeId base = detail::disc_unlabeled_term(g, arch, trunk);
  if (!arch.projection) return base;
  return g.add(g.sum_cols(g.mul(onehot, detail::disc_label_scores(g, arch, trunk))), base);
}

/// D(x, y') for every label y' as a batch × m matrix.
inline NodeId build_discriminator_all_labels(Graph& g, const DiscArch& arch, NodeId x) {
  const std::size_t B = g.node(x).rows;
  const auto m = static_cast<std::size_t>(arch.m);
  if (!arch.concat_y) {
    const NodeId trunk = detail::disc_trunk(g, arch, x, x);
    const NodeId base = detail::disc_unlabeled_term(g, arch, trunk);
    if (!arch.projection) return g.add(g.constant(Tensor(B, m, 0.0)), base);
    return g.add(detail::disc_label_scores(g, arch, trunk), base);
  }
  NodeId all = 0;
  for (std::size_t y = 0; y < m; ++y) {
    const NodeId oh = g.constant(one_hot(std::vector<int>(B, static_cast<int>(y)), arch.m));
    Tensor sel(1, m);
    sel.values[y] = 1.0;
    const NodeId col = g.mul(build_discriminator(g, arch, x, oh), g.constant(sel));
    all = y == 0 ? col : g.add(all, col);
  }
  return all;
}

inline std::vector<double> disc_forward(const Tensor& x, const std::vector<int>& labels, const ProjDiscParams& p) {
  if (x.rows() != labels.size() || x.cols() != p.arch.d_x)
    throw InvalidArgument("disc_forward: batch shape " + x.shape_string() + " does not match labels/d_x");
  const Tensor oh = one_hot(labels, p.arch.m);
  Graph g;
  build_discriminator(g, p.arch, g.input("x", x.rows(), x.cols()), g.input("y", oh.rows(), oh.cols()));
  return g.forward({{"x", x}, {"y", oh}}, p.weights).values;
}

/// Rescales each column of V whose largest absolute entry exceeds 1 and
/// normalizes v onto the unit ball.
inline void project_constraints_inplace(TensorMap& w) {
  if (auto it = w.find("disc/V"); it != w.end()) {
    Tensor& V = it->second;
    for (std::size_t j = 0; j < V.cols(); ++j) {
      double peak = 0.0;
      for (std::size_t i = 0; i < V.rows(); ++i) peak = std::max(peak, std::abs(V(i, j)));
      if (peak > 1.0)
        for (std::size_t i = 0; i < V.rows(); ++i) V(i, j) /= peak;
    }
  }
  if (auto it = w.find("disc/v"); it != w.end()) {
    auto norm = [&] {
      double sq = 0.0;
      for (double e : it->second.values) sq += e * e;
      return std::sqrt(sq);
    };
    const double n0 = norm();
    if (n0 > 1.0) {
      for (double& e : it->second.values) e /= n0;
      // Rounding can leave the norm an ulp above 1; shrink until it is not, so a
      // second projection is a no-op.
      while (norm() > 1.0)
        for (double& e : it->second.values) e *= std::nextafter(1.0, 0.0);
    }
  }
}

inline ProjDiscParams project_constraints(ProjDiscParams p) {
  if (p.arch.projection) project_constraints_inplace(p.weights);
  return p;
}

inline bool satisfies_constraints(const ProjDiscParams& p) {
  if (!p.arch.projection) return true;
  const Tensor& V = p.weights.at("disc/V");
  for (double e : V.values)
    if (std::abs(e) > 1.0) return false;
  double sq = 0.0;
  for (double e : p.weights.at("disc/v").values) sq += e * e;
  return std::sqrt(sq) <= 1.0;
}

// Classifiers: logits = MLP_relu(x).

inline ClassifierParams init_classifier(const ClassifierArch& arch, std::uint64_t seed, std::string prefix = "clf/") {
  ClassifierParams p{arch, {}, std::move(prefix)};
  detail::init_mlp(p.weights, arch.d_in, arch.hidden, static_cast<std::size_t>(arch.m), p.prefix, seed);
  return p;
}

inline NodeId build_classifier(Graph& g, const ClassifierArch& arch, NodeId x, const std::string& prefix) {
  return detail::build_mlp(g, x, arch.d_in, arch.hidden, static_cast<std::size_t>(arch.m), prefix,
                           [](Graph& gg, NodeId h) { return gg.relu(h); });
}

inline std::vector<int> predict(const ClassifierParams& f, const Tensor& x) {
  if (x.cols() != f.arch.d_in) throw InvalidArgument("predict: input width " + std::to_string(x.cols()) + " != " + std::to_string(f.arch.d_in));
  std::vector<int> out(x.rows());
  if (x.rows() == 0) return out;
  Graph g;
  build_classifier(g, f.arch, g.input("x", x.rows(), x.cols()), f.prefix);
  const Tensor logits = g.forward({{"x", x}}, f.weights);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double* row = &logits.values[i * logits.cols()];
    out[i] = static_cast<int>(std::max_element(row, row + logits.cols()) - row);
  }
  return out;
}

struct ClassifierTraining {
  std::size_t epochs = 20;
  double lr = 1e-2;
  std::size_t batch = 64;
  std::uint64_t seed = 0;
};

struct TrainedClassifier {
  ClassifierParams params;
  double train_accuracy = 0.0;
};

inline Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t count) {
  Tensor out(count, x.cols());
  for (std::size_t r = 0; r < count; ++r)
    std::copy_n(&x.values[idx[begin + r] * x.cols()], x.cols(), &out.values[r * x.cols()]);
  return out;
}

/// Minimizes mean softmax cross-entropy with Adam over shuffled mini-batches.
inline TrainedClassifier train_classifier(const Tensor& x, const std::vector<int>& targets, const ClassifierArch& arch,
                                          const ClassifierTraining& opt, const std::string& prefix = "clf/") {
  const std::size_t n = x.rows();
  if (n == 0 || targets.empty()) throw InvalidArgument("train_classifier: empty dataset");
  if (targets.size() != n || x.cols() != arch.d_in) throw InvalidArgument("train_classifier: inconsistent shapes");
  for (int t : targets)
    if (t < 0 || t >= arch.m) throw InvalidArgument("train_classifier: target outside [0, m)");
  ClassifierParams p = init_classifier(arch, derive_seed(opt.seed, "classifier-init"), prefix);
  const std::size_t B = std::min(opt.batch, n);
  Graph g;
  const NodeId xin = g.input("x", B, arch.d_in);
  g.mean_batch(g.softmax_xent(build_classifier(g, arch, xin, prefix), g.input("t", B, 1)));
  OptimizerState state = make_adam(opt.lr);
  std::vector<std::size_t> order(n);
  for (std::size_t e = 0; e < opt.epochs; ++e) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = substream(opt.seed, "classifier-shuffle", e);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t s = 0; s + B <= n; s += B) {
      std::vector<int> t(B);
      for (std::size_t r = 0; r < B; ++r) t[r] = targets[order[s + r]];
      g.forward({{"x", gather_rows(x, order, s, B)}, {"t", label_column(t)}}, p.weights);
      g.backward();
      optimizer_step(p.weights, g.parameter_gradients(), state);
    }
  }
  const auto pred = predict(p, x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) hits += pred[i] == targets[i];
  return {p, static_cast<double>(hits) / static_cast<double>(n)};
}

}  // namespace ncgl
