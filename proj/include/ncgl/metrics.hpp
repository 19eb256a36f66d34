#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include <json.hpp>

#include "ncgl/channel.hpp"
#include "ncgl/data.hpp"
#include "ncgl/models.hpp"
#include "ncgl/recovery.hpp"
#include "ncgl/rng.hpp"
#include "ncgl/training.hpp"

namespace ncgl {

struct EvalReport {
  double gen_label_acc = 0.0;
  std::optional<double> recovery_acc;
  std::optional<double> m_error;
  double per_class_mean_err = 0.0;
};

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"gen_label_acc", r.gen_label_acc}, {"per_class_mean_err", r.per_class_mean_err}};
  if (r.recovery_acc) j["recovery_acc"] = *r.recovery_acc;
  if (r.m_error) j["m_error"] = *r.m_error;
}

/// Fraction of n conditional samples, y uniform, that f classifies back to y.
inline double generator_label_accuracy(const GeneratorParams& G, const ClassifierParams& f, std::size_t n, Rng& rng) {
  if (n == 0) throw InvalidArgument("generator_label_accuracy: need at least one sample");
  if (f.arch.m != G.arch.m || f.arch.d_in != G.arch.d_x)
    throw InvalidArgument("generator_label_accuracy: classifier does not match the generator");
  std::vector<int> y(n);
  for (int& v : y) v = uniform_int(rng, G.arch.m);
  const Tensor z = sample_latent(n, G.arch.latent_dim, rng);
  const auto pred = predict(f, generate(G, z, y));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) hits += pred[i] == y[i];
  return static_cast<double>(hits) / static_cast<double>(n);
}

/// Distance between the per-class sample means of G and the given class means,
/// averaged over classes.
inline double per_class_mean_error(const GeneratorParams& G, const std::vector<std::vector<double>>& means,
                                   std::size_t n_per_class, Rng& rng) {
  double total = 0.0;
  for (int c = 0; c < G.arch.m; ++c) {
    const Tensor x = generate(G, sample_latent(n_per_class, G.arch.latent_dim, rng), std::vector<int>(n_per_class, c));
    double sq = 0.0;
    for (std::size_t d = 0; d < x.cols(); ++d) {
      double mean = 0.0;
      for (std::size_t i = 0; i < x.rows(); ++i) mean += x(i, d);
      mean /= static_cast<double>(x.rows());
      sq += (mean - means[c][d]) * (mean - means[c][d]);
    }
    total += std::sqrt(sq);
  }
  return total / G.arch.m;
}

/// max_ij |M_ij − C_ij|.
inline double confusion_error(const ConfusionMatrix& M, const ConfusionMatrix& C) {
  if (M.classes() != C.classes()) throw InvalidArgument("confusion_error: class counts differ");
  double worst = 0.0;
  for (int i = 0; i < M.classes(); ++i)
    for (int j = 0; j < M.classes(); ++j) worst = std::max(worst, std::abs(M(i, j) - C(i, j)));
  return worst;
}

/// Recovery accuracy against clean labels on sample_count rows drawn without
/// replacement (all rows when sample_count ≥ n).
inline double recovery_accuracy(const GeneratorParams& G, const LabeledDataset& ds, const RecoveryConfig& cfg,
                                std::size_t sample_count, Rng& rng) {
  if (!ds.clean_labels) throw InvalidArgument("recovery_accuracy: dataset has no clean labels");
  if (ds.size() == 0 || sample_count == 0) throw InvalidArgument("recovery_accuracy: nothing to evaluate");
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(sample_count, ds.size()));
  const Tensor X = gather_rows(ds.x, idx, 0, idx.size());
  const auto res = recover_labels(X, G, cfg, rng());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) hits += res[i].label == (*ds.clean_labels)[idx[i]];
  return static_cast<double>(hits) / static_cast<double>(idx.size());
}

/// Per-epoch evaluator with a fixed evaluation stream, so logs depend only on
/// the generator state.
inline Evaluator make_evaluator(const ClassifierParams& f, std::size_t n, std::uint64_t seed,
                                std::optional<ConfusionMatrix> C_true = std::nullopt) {
  Evaluator e;
  e.gen_label_acc = [f, n, seed](const GeneratorParams& G) {
    Rng rng = substream(seed, "gen-label-acc");
    return generator_label_accuracy(G, f, n, rng);
  };
  if (C_true) e.m_error = [C = *C_true](const ConfusionMatrix& M) { return confusion_error(M, C); };
  return e;
}

/// Clean-data evaluation classifier: two hidden ReLU layers.
inline TrainedClassifier train_evaluation_classifier(const LabeledDataset& clean, std::uint64_t seed,
                                                     std::size_t epochs = 10) {
  if (!clean.clean_labels) throw InvalidArgument("evaluation classifier needs clean labels");
  return train_classifier(clean.x, *clean.clean_labels, ClassifierArch{clean.dim(), clean.classes, {32, 32}},
                          ClassifierTraining{epochs, 1e-2, 64, seed}, "f/");
}

}  // namespace ncgl
