#pragma once

// Label recovery by generator inversion: ŷ = argmin_y min_z ‖G(z; y) − x‖².

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "ncgl/diffcomp/graph.hpp"
#include "ncgl/diffcomp/optimizer.hpp"
#include "ncgl/error.hpp"
#include "ncgl/models.hpp"
#include "ncgl/parallel.hpp"
#include "ncgl/rng.hpp"

namespace ncgl {

struct RecoveryConfig {
  std::size_t restarts = 5;
  std::size_t steps = 200;
  double lr = 0.05;

  void validate() const {
    if (restarts < 1 || steps < 1) throw InvalidArgument("recovery: restarts and steps must be >= 1");
  }
};

struct RecoveryResult {
  int label = 0;
  std::vector<double> residuals;  // best squared residual per class
};

namespace detail {

/// Initial latent for (sample, class, restart); restart r is the same for any
/// restart budget above r.
inline void init_latent(double* z, std::size_t dim, std::uint64_t seed, std::size_t sample, std::size_t cls,
                        std::size_t restart) {
  Rng rng = substream(derive_seed(seed, "recover-sample", sample), "class-restart", (cls << 32) | restart);
  for (std::size_t k = 0; k < dim; ++k) z[k] = standard_normal(rng);
}

inline void recover_chunk(const Tensor& X, std::size_t begin, std::size_t count, const GeneratorParams& G,
                          const RecoveryConfig& cfg, std::uint64_t seed, std::vector<RecoveryResult>& out) {
  const auto m = static_cast<std::size_t>(G.arch.m);
  const std::size_t dz = G.arch.latent_dim, dx = G.arch.d_x, R = cfg.restarts;
  const std::size_t rows = count * m * R;
  Tensor z(rows, dz), target(rows, dx), labels(rows, m);
  for (std::size_t s = 0; s < count; ++s)
    for (std::size_t c = 0; c < m; ++c)
      for (std::size_t r = 0; r < R; ++r) {
        const std::size_t row = (s * m + c) * R + r;
        init_latent(&z.values[row * dz], dz, seed, begin + s, c, r);
        std::copy_n(&X.values[(begin + s) * dx], dx, &target.values[row * dx]);
        labels(row, c) = 1.0;
      }
  Graph g;
  const NodeId zn = g.parameter("recover/z", rows, dz);
  const NodeId xg = build_generator(g, G.arch, zn, g.input("y", rows, m));
  const NodeId diff = g.sub(xg, g.input("x", rows, dx));
  g.squared_l2(diff);
  TensorMap params = G.weights;
  params["recover/z"] = std::move(z);
  const TensorMap inputs{{"y", labels}, {"x", target}};
  std::vector<double> best(rows, std::numeric_limits<double>::infinity());
  OptimizerState opt = make_adam(cfg.lr);
  for (std::size_t it = 0; it <= cfg.steps; ++it) {
    g.forward(inputs, params);
    const auto& d = g.node(diff).value;
    for (std::size_t row = 0; row < rows; ++row) {
      double sq = 0.0;
      for (std::size_t k = 0; k < dx; ++k) sq += d[row * dx + k] * d[row * dx + k];
      best[row] = std::min(best[row], sq);
    }
    if (it == cfg.steps) break;
    g.backward();
    optimizer_step(params, {{"recover/z", g.grad(zn)}}, opt);
  }
  for (std::size_t s = 0; s < count; ++s) {
    RecoveryResult res;
    res.residuals.assign(m, std::numeric_limits<double>::infinity());
    for (std::size_t c = 0; c < m; ++c)
      for (std::size_t r = 0; r < R; ++r) res.residuals[c] = std::min(res.residuals[c], best[(s * m + c) * R + r]);
    res.label = static_cast<int>(std::min_element(res.residuals.begin(), res.residuals.end()) - res.residuals.begin());
    out[begin + s] = std::move(res);
  }
}

}  // namespace detail

/// Recovers labels for every row of X. Rows are processed in independent
/// chunks, so the result does not depend on the worker count.
inline std::vector<RecoveryResult> recover_labels(const Tensor& X, const GeneratorParams& G, const RecoveryConfig& cfg,
                                                  std::uint64_t seed) {
  cfg.validate();
  if (X.rows() > 0 && X.cols() != G.arch.d_x)
    throw InvalidArgument("recover: sample dimension " + std::to_string(X.cols()) + " != generator output " +
                          std::to_string(G.arch.d_x));
  std::vector<RecoveryResult> out(X.rows());
  constexpr std::size_t kChunk = 32;
  const std::size_t chunks = (X.rows() + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t begin = c * kChunk;
    detail::recover_chunk(X, begin, std::min(kChunk, X.rows() - begin), G, cfg, seed, out);
  });
  return out;
}

inline RecoveryResult recover_label(const std::vector<double>& x, const GeneratorParams& G, const RecoveryConfig& cfg,
                                    Rng& rng) {
  if (x.size() != G.arch.d_x)
    throw InvalidArgument("recover_label: sample dimension " + std::to_string(x.size()) + " != generator output " +
                          std::to_string(G.arch.d_x));
  return recover_labels(Tensor::matrix(1, x.size(), x), G, cfg, rng()).front();
}

}  // namespace ncgl
