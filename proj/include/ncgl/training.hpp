#pragma once

// Conditional GAN training under label noise: Biased, Unbiased, RCGAN, RCGAN-U,
// RCGAN+y and the AmbientGAN-style ablation, sharing one alternating D/G loop.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ncgl/channel.hpp"
#include "ncgl/data.hpp"
#include "ncgl/diffcomp/checkpoint.hpp"
#include "ncgl/diffcomp/graph.hpp"
#include "ncgl/diffcomp/optimizer.hpp"
#include "ncgl/error.hpp"
#include "ncgl/models.hpp"
#include "ncgl/rng.hpp"

namespace ncgl {

enum class Variant { Biased, Unbiased, RCGAN, RCGAN_U, RCGAN_plus_y, AmbientStyle };
/// Hinge: margin hinge on raw scores, D minimizes E relu(1 − s_real) + E relu(1 + s_fake),
/// G minimizes −E s_fake. HingeZeroMargin: D minimizes E φ(s_real) + E φ(1 − s_fake) with
/// φ(a) = max(0, 1 − 2a), G minimizes E (1 − 2 s_fake). Logistic: standard GAN loss with a
/// non-saturating generator term.
enum class LossKind { Hinge, HingeZeroMargin, Logistic };

inline const char* loss_name(LossKind k) {
  switch (k) {
    case LossKind::Hinge: return "hinge";
    case LossKind::HingeZeroMargin: return "hinge_zero_margin";
    case LossKind::Logistic: return "logistic";
  }
  return "?";
}

inline LossKind parse_loss(const std::string& s) {
  for (LossKind k : {LossKind::Hinge, LossKind::HingeZeroMargin, LossKind::Logistic})
    if (s == loss_name(k)) return k;
  throw InvalidArgument("config: unknown loss '" + s + "'");
}
enum class FakeLabelMarginal { Noisy, Uniform, CleanInferred };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Biased: return "Biased";
    case Variant::Unbiased: return "Unbiased";
    case Variant::RCGAN: return "RCGAN";
    case Variant::RCGAN_U: return "RCGAN_U";
    case Variant::RCGAN_plus_y: return "RCGAN_plus_y";
    case Variant::AmbientStyle: return "AmbientStyle";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::Biased, Variant::Unbiased, Variant::RCGAN, Variant::RCGAN_U, Variant::RCGAN_plus_y,
                    Variant::AmbientStyle})
    if (s == variant_name(v)) return v;
  throw InvalidArgument("unknown variant '" + s + "'");
}

inline bool needs_known_channel(Variant v) { return v != Variant::Biased && v != Variant::RCGAN_U; }
inline bool forbids_known_channel(Variant v) { return v == Variant::RCGAN_U; }

/// Extra uniform flipping applied on top of the data channel by RCGAN+y:
/// constant accuracy start_pi_tilde, then a linear ramp to 1, then 1.
struct NoiseSchedule {
  double start_pi_tilde = 0.5;
  double ramp_begin = 0.3;  // fractions of the epoch budget
  double ramp_end = 0.8;

  double pi_tilde(std::size_t epoch, std::size_t epochs) const {
    const double t = epochs == 0 ? 1.0 : static_cast<double>(epoch) / static_cast<double>(epochs);
    if (t < ramp_begin) return start_pi_tilde;
    if (t >= ramp_end) return 1.0;
    return start_pi_tilde + (1.0 - start_pi_tilde) * (t - ramp_begin) / (ramp_end - ramp_begin);
  }
};

/// Accuracy of a uniform-flip channel with accuracy pi followed by one with pi_tilde.
inline double effective_noise(double pi_tilde, double pi, int m) {
  if (m < 2 || pi < 0 || pi > 1 || pi_tilde < 0 || pi_tilde > 1)
    throw InvalidArgument("effective_noise: arguments out of range");
  const double q = (1.0 - pi) / (m - 1);
  return pi_tilde * (pi - q) + q;
}

struct ExperimentConfig {
  Variant variant = Variant::RCGAN;
  std::optional<double> lambda;  // unset: 1 for RCGAN-U, 0 otherwise
  double lr_d = 1e-3;
  double lr_g = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double m_lr_multiplier = 1.0;
  std::size_t batch = 64;
  std::size_t epochs = 30;
  std::size_t d_steps_per_g = 1;
  std::uint64_t seed = 0;
  std::size_t latent_dim = 4;
  std::vector<std::size_t> gen_hidden{32, 32};
  std::vector<std::size_t> disc_hidden{64, 64};
  std::size_t d_V = 64;
  std::size_t d_v = 64;
  LossKind loss = LossKind::Hinge;
  FakeLabelMarginal fake_label_marginal = FakeLabelMarginal::Noisy;
  std::optional<double> m_init_diag;  // unset: 0.2 when that is diagonally dominant, else 0.5
  NoiseSchedule schedule;
  std::vector<std::size_t> hstar_hidden;  // linear by default
  std::size_t hstar_epochs = 10;
  double hstar_lr = 1e-2;

  double lambda_value() const { return lambda.value_or(variant == Variant::RCGAN_U ? 1.0 : 0.0); }

  double m_init_diag_value(int m) const {
    if (m_init_diag) return *m_init_diag;
    return 0.2 > 0.8 / (m - 1) ? 0.2 : 0.5;
  }

  void validate() const {
    if (lambda && !(*lambda >= 0.0)) throw InvalidArgument("config: lambda must be >= 0");
    if (batch < 1) throw InvalidArgument("config: batch must be >= 1");
    if (!(m_lr_multiplier > 0.0)) throw InvalidArgument("config: m_lr_multiplier must be > 0");
    if (d_steps_per_g < 1) throw InvalidArgument("config: d_steps_per_g must be >= 1");
    if (latent_dim < 1) throw InvalidArgument("config: latent_dim must be >= 1");
    if (!(lr_d >= 0.0 && lr_g >= 0.0)) throw InvalidArgument("config: learning rates must be >= 0");
    if (loss == LossKind::Logistic && variant != Variant::Biased)
      throw InvalidArgument("config: the logistic loss is only available for the Biased variant");
    if (m_init_diag && !(*m_init_diag > 0.0 && *m_init_diag < 1.0))
      throw InvalidArgument("config: m_init_diag must lie in (0,1)");
    if (!(schedule.start_pi_tilde >= 0.0 && schedule.start_pi_tilde <= 1.0 && schedule.ramp_begin <= schedule.ramp_end))
      throw InvalidArgument("config: invalid noise schedule");
  }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"variant", variant_name(c.variant)},
       {"lr_d", c.lr_d},
       {"lr_g", c.lr_g},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"m_lr_multiplier", c.m_lr_multiplier},
       {"batch", c.batch},
       {"epochs", c.epochs},
       {"d_steps_per_g", c.d_steps_per_g},
       {"seed", c.seed},
       {"latent_dim", c.latent_dim},
       {"gen_hidden", c.gen_hidden},
       {"disc_hidden", c.disc_hidden},
       {"d_V", c.d_V},
       {"d_v", c.d_v},
       {"loss", loss_name(c.loss)},
       {"fake_label_marginal", c.fake_label_marginal == FakeLabelMarginal::Noisy     ? "noisy"
                               : c.fake_label_marginal == FakeLabelMarginal::Uniform ? "uniform"
                                                                                      : "clean_inferred"},
       {"schedule",
        {{"start_pi_tilde", c.schedule.start_pi_tilde},
         {"ramp_begin", c.schedule.ramp_begin},
         {"ramp_end", c.schedule.ramp_end}}},
       {"hstar_hidden", c.hstar_hidden},
       {"hstar_epochs", c.hstar_epochs},
       {"hstar_lr", c.hstar_lr},
       {"lambda", c.lambda_value()}};
  if (c.m_init_diag) j["m_init_diag"] = *c.m_init_diag;
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c = ExperimentConfig{};
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
  if (j.contains("lambda")) c.lambda = j.at("lambda").get<double>();
  c.lr_d = j.value("lr_d", c.lr_d);
  c.lr_g = j.value("lr_g", c.lr_g);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.m_lr_multiplier = j.value("m_lr_multiplier", c.m_lr_multiplier);
  c.batch = j.value("batch", c.batch);
  c.epochs = j.value("epochs", c.epochs);
  c.d_steps_per_g = j.value("d_steps_per_g", c.d_steps_per_g);
  c.seed = j.value("seed", c.seed);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.gen_hidden = j.value("gen_hidden", c.gen_hidden);
  c.disc_hidden = j.value("disc_hidden", c.disc_hidden);
  c.d_V = j.value("d_V", c.d_V);
  c.d_v = j.value("d_v", c.d_v);
  if (j.contains("loss")) c.loss = parse_loss(j.at("loss").get<std::string>());
  if (j.contains("fake_label_marginal")) {
    const auto s = j.at("fake_label_marginal").get<std::string>();
    if (s == "noisy")
      c.fake_label_marginal = FakeLabelMarginal::Noisy;
    else if (s == "uniform")
      c.fake_label_marginal = FakeLabelMarginal::Uniform;
    else if (s == "clean_inferred")
      c.fake_label_marginal = FakeLabelMarginal::CleanInferred;
    else
      throw InvalidArgument("config: unknown fake_label_marginal '" + s + "'");
  }
  if (j.contains("m_init_diag")) c.m_init_diag = j.at("m_init_diag").get<double>();
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    c.schedule.start_pi_tilde = s.value("start_pi_tilde", c.schedule.start_pi_tilde);
    c.schedule.ramp_begin = s.value("ramp_begin", c.schedule.ramp_begin);
    c.schedule.ramp_end = s.value("ramp_end", c.schedule.ramp_end);
  }
  c.hstar_hidden = j.value("hstar_hidden", c.hstar_hidden);
  c.hstar_epochs = j.value("hstar_epochs", c.hstar_epochs);
  c.hstar_lr = j.value("hstar_lr", c.hstar_lr);
}

inline GeneratorArch generator_arch(const ExperimentConfig& c, int m, std::size_t d_x) {
  return {m, c.latent_dim, d_x, c.gen_hidden};
}

inline DiscArch discriminator_arch(const ExperimentConfig& c, int m, std::size_t d_x) {
  const bool concat = c.variant == Variant::RCGAN_plus_y || c.variant == Variant::AmbientStyle;
  return {m, d_x, c.disc_hidden, c.d_V, c.d_v, concat, c.variant != Variant::AmbientStyle};
}

/// Learned channel M, parameterized by per-row softmax logits.
struct ChannelEstimate {
  Matrix logits;

  static ChannelEstimate diagonal(int m, double diag) {
    const double off = (1.0 - diag) / (m - 1);
    ChannelEstimate e{Matrix(m, m)};
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) e.logits(i, j) = std::log(i == j ? diag : off);
    return e;
  }

  static ConfusionMatrix realize(const Matrix& logits) {
    const std::size_t m = logits.rows();
    Matrix p(m, m);
    for (std::size_t i = 0; i < m; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (double v : logits.row(i)) mx = std::max(mx, v);
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += (p(i, j) = std::exp(logits(i, j) - mx));
      for (std::size_t j = 0; j < m; ++j) p(i, j) /= s;
      // Put the rounding residue on the largest entry so the row sums to 1.
      std::size_t top = 0;
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        acc += p(i, j);
        if (p(i, j) > p(i, top)) top = j;
      }
      p(i, top) += 1.0 - acc;
    }
    return ConfusionMatrix(std::move(p));
  }

  ConfusionMatrix realized() const { return realize(logits); }
};

// Loss building blocks over raw discriminator scores (batch × 1 or batch × m).

/// φ(a) = max(0, 1 − 2a) applied to the real and fake terms:
/// mean φ(D_real) + mean φ(1 − D_fake).
inline NodeId zero_margin_discriminator_loss(Graph& g, NodeId d_real, NodeId d_fake) {
  return g.add(g.mean_batch(g.hinge(d_real)), g.mean_batch(g.hinge(g.affine(d_fake, -1.0, 1.0))));
}

/// relu(1 − s) elementwise, the real-side margin hinge; equals φ(s/2).
inline NodeId real_margin_hinge(Graph& g, NodeId s) { return g.relu(g.affine(s, -1.0, 1.0)); }

/// relu(1 + s) elementwise, the fake-side margin hinge; equals φ(−s/2).
inline NodeId fake_margin_hinge(Graph& g, NodeId s) { return g.relu(g.affine(s, 1.0, 1.0)); }

inline NodeId discriminator_loss(Graph& g, LossKind kind, NodeId s_real, NodeId s_fake) {
  switch (kind) {
    case LossKind::Hinge:
      return g.add(g.mean_batch(real_margin_hinge(g, s_real)), g.mean_batch(fake_margin_hinge(g, s_fake)));
    case LossKind::HingeZeroMargin: return zero_margin_discriminator_loss(g, s_real, s_fake);
    case LossKind::Logistic:
      return g.add(g.mean_batch(g.softplus(g.affine(s_real, -1.0, 0.0))), g.mean_batch(g.softplus(s_fake)));
  }
  return s_real;
}

/// Elementwise real-side term, used with per-label weights by the unbiased loss.
inline NodeId real_term(Graph& g, LossKind kind, NodeId s) {
  switch (kind) {
    case LossKind::Hinge: return real_margin_hinge(g, s);
    case LossKind::HingeZeroMargin: return g.hinge(s);
    case LossKind::Logistic: return g.softplus(g.affine(s, -1.0, 0.0));
  }
  return s;
}

inline NodeId fake_term(Graph& g, LossKind kind, NodeId s) {
  switch (kind) {
    case LossKind::Hinge: return fake_margin_hinge(g, s);
    case LossKind::HingeZeroMargin: return g.hinge(g.affine(s, -1.0, 1.0));
    case LossKind::Logistic: return g.softplus(s);
  }
  return s;
}

/// Elementwise generator adversarial term on fake scores.
inline NodeId generator_term(Graph& g, LossKind kind, NodeId s) {
  switch (kind) {
    case LossKind::Hinge: return g.affine(s, -1.0, 0.0);
    case LossKind::HingeZeroMargin: return g.affine(s, -2.0, 1.0);
    case LossKind::Logistic: return g.softplus(g.affine(s, -1.0, 0.0));
  }
  return s;
}

/// Per-row Σ_j W_ij · values_ij, batch × 1. With W the rows of M selected by the
/// conditioning labels and values φ(1 − D(x, j)) this is φ_M.
inline NodeId channel_expectation(Graph& g, NodeId weights, NodeId values) {
  return g.sum_cols(g.mul(weights, values));
}

struct MetricRow {
  std::size_t epoch = 0;
  std::string variant;
  double loss_d = 0.0;
  double loss_g = 0.0;
  double gen_label_acc = std::numeric_limits<double>::quiet_NaN();
  double m_error = std::numeric_limits<double>::quiet_NaN();
};

inline std::string format_metric(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out = "epoch,variant,loss_d,loss_g,gen_label_acc,m_error\n";
  for (const auto& r : rows)
    out += std::to_string(r.epoch) + "," + r.variant + "," + format_metric(r.loss_d) + "," + format_metric(r.loss_g) +
           "," + format_metric(r.gen_label_acc) + "," + format_metric(r.m_error) + "\n";
  return out;
}

/// Callbacks invoked after every epoch; either may be empty.
struct Evaluator {
  std::function<double(const GeneratorParams&)> gen_label_acc;
  std::function<double(const ConfusionMatrix&)> m_error;
};

struct RunArtifacts {
  ExperimentConfig config;
  GeneratorParams generator;
  ProjDiscParams discriminator;
  std::optional<ClassifierParams> h_star;
  std::optional<ConfusionMatrix> learned_channel;
  std::vector<MetricRow> log;

  TensorMap all_parameters() const {
    TensorMap out = generator.weights;
    out.insert(discriminator.weights.begin(), discriminator.weights.end());
    if (h_star) out.insert(h_star->weights.begin(), h_star->weights.end());
    if (learned_channel) {
      const std::size_t m = learned_channel->classes();
      out["channel/M"] = Tensor::matrix(m, m, learned_channel->matrix().data());
    }
    return out;
  }
};

/// Raised when a loss or gradient turns NaN; carries the parameters at the end
/// of the last completed epoch.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, std::size_t epoch, TensorMap last_good)
      : NumericError(what), epoch_(epoch), last_good_(std::move(last_good)) {}
  std::size_t epoch() const { return epoch_; }
  const TensorMap& last_good() const { return last_good_; }

 private:
  std::size_t epoch_;
  TensorMap last_good_;
};

namespace detail {

inline TensorMap with_prefix(const TensorMap& all, const std::string& prefix) {
  TensorMap out;
  for (const auto& [k, v] : all)
    if (k.rfind(prefix, 0) == 0) out.emplace(k, v);
  return out;
}

inline ConfusionMatrix compose(const ConfusionMatrix& a, const ConfusionMatrix& b) {
  Matrix p = a.matrix() * b.matrix();
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double s = 0.0;
    std::size_t top = 0;
    for (std::size_t j = 0; j < p.cols(); ++j) {
      s += p(i, j);
      if (p(i, j) > p(i, top)) top = j;
    }
    p(i, top) += 1.0 - s;
  }
  return ConfusionMatrix(std::move(p));
}

class Sampler {
 public:
  Sampler(std::vector<double> probs) : cdf_(probs.size()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) cdf_[i] = (acc += probs[i]);
    total_ = acc;
  }
  int draw(Rng& rng) const {
    const double u = uniform01(rng) * total_;
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return static_cast<int>(std::min<std::size_t>(it - cdf_.begin(), cdf_.size() - 1));
  }

 private:
  std::vector<double> cdf_;
  double total_ = 0.0;
};

inline std::vector<double> fake_label_distribution(const ExperimentConfig& cfg, const std::vector<int>& noisy, int m,
                                                   const std::optional<ConfusionMatrix>& C) {
  std::vector<double> noisy_freq(m, 0.0);
  for (int y : noisy) noisy_freq[y] += 1.0 / static_cast<double>(noisy.size());
  switch (cfg.fake_label_marginal) {
    case FakeLabelMarginal::Uniform: return std::vector<double>(m, 1.0 / m);
    case FakeLabelMarginal::Noisy: return noisy_freq;
    case FakeLabelMarginal::CleanInferred: {
      if (!C) throw InvalidArgument("fake_label_marginal=clean_inferred needs a known channel");
      const auto a = analyze(*C);
      if (!a.is_full_rank) throw PreconditionViolation("clean_inferred marginal needs a full-rank channel");
      auto p = apply_transposed(*a.inverse, noisy_freq);
      double s = 0.0;
      for (double& v : p) s += (v = std::max(v, 0.0));
      for (double& v : p) v /= s;
      return p;
    }
  }
  return noisy_freq;
}

/// One batch of generator labels y and the labels ỹ the fake samples are paired with.
inline void draw_fake_labels(std::size_t B, const Sampler& sampler, const std::optional<ConfusionMatrix>& channel,
                             Rng& label_rng, Rng& corrupt_rng, std::vector<int>& y_gen, std::vector<int>& y_fake) {
  y_gen.resize(B);
  y_fake.resize(B);
  for (std::size_t r = 0; r < B; ++r) y_gen[r] = sampler.draw(label_rng);
  for (std::size_t r = 0; r < B; ++r) y_fake[r] = channel ? corrupt(y_gen[r], *channel, corrupt_rng) : y_gen[r];
}

inline bool all_finite(const Tensor& t) {
  for (double v : t.values)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace detail

/// Full training run: optional h* pre-training, then alternating D/G steps.
inline RunArtifacts train(const ExperimentConfig& cfg, const TrainingView& data,
                          const std::optional<ConfusionMatrix>& C_known, const Evaluator& eval = {}) {
  cfg.validate();
  const Variant variant = cfg.variant;
  if (needs_known_channel(variant) && !C_known)
    throw InvalidArgument(std::string("train: variant ") + variant_name(variant) + " requires a known channel");
  if (forbids_known_channel(variant) && C_known)
    throw InvalidArgument("train: RCGAN_U estimates the channel and must not be given one");
  const int m = data.classes();
  const std::size_t n = data.size(), d_x = data.x().cols();
  if (n == 0) throw InvalidArgument("train: empty dataset");
  if (m < 2) throw InvalidArgument("train: need at least two classes");
  if (C_known && C_known->classes() != m) throw InvalidArgument("train: channel size does not match class count");
  const std::size_t B = std::min(cfg.batch, n);
  const double lambda = cfg.lambda_value();
  const auto& X = data.x();
  const auto& noisy = data.noisy_labels();

  std::optional<Matrix> C_inv;
  if (variant == Variant::Unbiased) {
    const auto a = analyze(*C_known);
    if (!a.is_full_rank) throw PreconditionViolation("train: Unbiased needs a full-rank channel");
    C_inv = a.inverse;
  }

  RunArtifacts run;
  run.config = cfg;
  run.generator = init_generator(generator_arch(cfg, m, d_x), derive_seed(cfg.seed, "init-generator"));
  run.discriminator = project_constraints(init_discriminator(discriminator_arch(cfg, m, d_x), derive_seed(cfg.seed, "init-discriminator")));
  const GeneratorArch& ga = run.generator.arch;
  const DiscArch& da = run.discriminator.arch;

  if (lambda > 0.0) {
    ClassifierTraining opt{cfg.hstar_epochs, cfg.hstar_lr, 64, derive_seed(cfg.seed, "hstar")};
    run.h_star = train_classifier(X, noisy, ClassifierArch{d_x, m, cfg.hstar_hidden}, opt, "hstar/").params;
  }

  std::optional<ChannelEstimate> M;
  if (variant == Variant::RCGAN_U) M = ChannelEstimate::diagonal(m, cfg.m_init_diag_value(m));

  // Parameter map shared by both graphs.
  TensorMap params = run.generator.weights;
  params.insert(run.discriminator.weights.begin(), run.discriminator.weights.end());
  if (run.h_star) params.insert(run.h_star->weights.begin(), run.h_star->weights.end());
  if (M) params["channel/logits"] = Tensor::matrix(m, m, M->logits.data());

  const auto mu = static_cast<std::size_t>(m);

  // Discriminator step graph.
  Graph gd;
  {
    const NodeId x_real = gd.input("x_real", B, d_x), y_real = gd.input("y_real", B, mu);
    const NodeId x_fake = build_generator(gd, ga, gd.input("z", B, ga.latent_dim), gd.input("y_gen", B, mu));
    const NodeId s_fake = build_discriminator(gd, da, x_fake, gd.input("y_fake", B, mu));
    if (variant == Variant::Unbiased) {
      const NodeId all = build_discriminator_all_labels(gd, da, x_real);
      const NodeId weighted = channel_expectation(gd, gd.input("w_real", B, mu), real_term(gd, cfg.loss, all));
      gd.add(gd.mean_batch(weighted), gd.mean_batch(fake_term(gd, cfg.loss, s_fake)));
    } else {
      discriminator_loss(gd, cfg.loss, build_discriminator(gd, da, x_real, y_real), s_fake);
    }
  }

  // Generator step graph.
  Graph gg;
  {
    const NodeId y_gen = gg.input("y_gen", B, mu);
    const NodeId x_fake = build_generator(gg, ga, gg.input("z", B, ga.latent_dim), y_gen);
    NodeId adv;
    if (variant == Variant::RCGAN_U) {
      const NodeId rows = gg.matmul(y_gen, gg.row_softmax(gg.parameter("channel/logits", mu, mu)));
      const NodeId all = build_discriminator_all_labels(gg, da, x_fake);
      adv = gg.mean_batch(channel_expectation(gg, rows, generator_term(gg, cfg.loss, all)));
    } else {
      const NodeId s = build_discriminator(gg, da, x_fake, gg.input("y_fake", B, mu));
      adv = gg.mean_batch(generator_term(gg, cfg.loss, s));
    }
    if (lambda > 0.0) {
      const NodeId logits = build_classifier(gg, run.h_star->arch, x_fake, "hstar/");
      const NodeId ce = gg.mean_batch(gg.softmax_xent(logits, gg.input("t_gen", B, 1)));
      gg.add(adv, gg.affine(ce, lambda, 0.0));
    } else {
      gg.affine(adv, 1.0, 0.0);
    }
  }

  OptimizerState opt_d = make_adam(cfg.lr_d, cfg.beta1, cfg.beta2);
  OptimizerState opt_g = make_adam(cfg.lr_g, cfg.beta1, cfg.beta2);
  OptimizerState opt_m = make_adam(cfg.lr_g * cfg.m_lr_multiplier, cfg.beta1, cfg.beta2);

  const detail::Sampler label_sampler(detail::fake_label_distribution(cfg, noisy, m, C_known));
  const std::size_t steps = n / B;
  std::vector<std::size_t> order(n);
  TensorMap last_good = params;

  auto sync_run = [&] {
    for (auto& [k, v] : run.generator.weights) v = params.at(k);
    for (auto& [k, v] : run.discriminator.weights) v = params.at(k);
    if (M) {
      M->logits.data() = params.at("channel/logits").values;
      run.learned_channel = M->realized();
    }
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng = substream(cfg.seed, "shuffle", epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    Rng label_rng = substream(cfg.seed, "labels", epoch);
    Rng latent_rng = substream(cfg.seed, "latent", epoch);
    Rng corrupt_rng = substream(cfg.seed, "corrupt", epoch);

    // Channel that fake labels pass through, and extra flips on real labels.
    std::optional<ConfusionMatrix> fake_channel;
    std::optional<ConfusionMatrix> real_extra;
    if (variant == Variant::RCGAN || variant == Variant::AmbientStyle) fake_channel = *C_known;
    if (variant == Variant::RCGAN_plus_y) {
      real_extra = make_uniform_flip(m, cfg.schedule.pi_tilde(epoch, cfg.epochs));
      fake_channel = detail::compose(*C_known, *real_extra);
    }

    double sum_d = 0.0, sum_g = 0.0;
    std::size_t count_d = 0, count_g = 0;
    auto fake_batch = [&](std::vector<int>& y_gen, std::vector<int>& y_fake) {
      if (variant == Variant::RCGAN_U) {
        Matrix logits(mu, mu);
        logits.data() = params.at("channel/logits").values;
        fake_channel = ChannelEstimate::realize(logits);
      }
      detail::draw_fake_labels(B, label_sampler, fake_channel, label_rng, corrupt_rng, y_gen, y_fake);
    };
    auto diverged = [&](const std::string& what) {
      return TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + ": " + what, epoch, last_good);
    };

    for (std::size_t s = 0; s < steps; ++s) {
      // Discriminator update on one real batch.
      std::vector<int> y_real(B), y_gen, y_fake;
      for (std::size_t r = 0; r < B; ++r) {
        y_real[r] = noisy[order[s * B + r]];
        if (real_extra) y_real[r] = corrupt(y_real[r], *real_extra, corrupt_rng);
      }
      fake_batch(y_gen, y_fake);
      TensorMap in{{"x_real", gather_rows(X, order, s * B, B)},
                   {"y_real", one_hot(y_real, m)},
                   {"z", sample_latent(B, ga.latent_dim, latent_rng)},
                   {"y_gen", one_hot(y_gen, m)},
                   {"y_fake", one_hot(y_fake, m)}};
      if (C_inv) {
        Tensor w(B, mu);
        for (std::size_t r = 0; r < B; ++r)
          for (std::size_t j = 0; j < mu; ++j) w(r, j) = (*C_inv)(static_cast<std::size_t>(y_real[r]), j);
        in["w_real"] = std::move(w);
      }
      const double ld = gd.forward(in, params).values[0];
      if (!std::isfinite(ld)) throw diverged("discriminator loss is not finite");
      gd.backward();
      try {
        optimizer_step(params, detail::with_prefix(gd.parameter_gradients(), "disc/"), opt_d);
      } catch (const NumericError& e) {
        throw diverged(e.what());
      }
      if (da.projection) project_constraints_inplace(params);
      sum_d += ld;
      ++count_d;

      if ((s + 1) % cfg.d_steps_per_g != 0) continue;

      // Generator (and channel estimate) update.
      fake_batch(y_gen, y_fake);
      TensorMap gin{{"z", sample_latent(B, ga.latent_dim, latent_rng)},
                    {"y_gen", one_hot(y_gen, m)},
                    {"y_fake", one_hot(y_fake, m)}};
      if (lambda > 0.0) gin["t_gen"] = label_column(y_gen);
      const double lg = gg.forward(gin, params).values[0];
      if (!std::isfinite(lg)) throw diverged("generator loss is not finite");
      gg.backward();
      const TensorMap grads = gg.parameter_gradients();
      try {
        optimizer_step(params, detail::with_prefix(grads, "gen/"), opt_g);
        if (M) optimizer_step(params, detail::with_prefix(grads, "channel/"), opt_m);
      } catch (const NumericError& e) {
        throw diverged(e.what());
      }
      sum_g += lg;
      ++count_g;
    }

    for (const auto& [k, v] : params)
      if (!detail::all_finite(v)) throw diverged("parameter '" + k + "' is not finite");
    last_good = params;
    sync_run();
    MetricRow row;
    row.epoch = epoch + 1;
    row.variant = variant_name(variant);
    row.loss_d = count_d ? sum_d / static_cast<double>(count_d) : 0.0;
    row.loss_g = count_g ? sum_g / static_cast<double>(count_g) : 0.0;
    if (eval.gen_label_acc) row.gen_label_acc = eval.gen_label_acc(run.generator);
    if (eval.m_error && run.learned_channel) row.m_error = eval.m_error(*run.learned_channel);
    run.log.push_back(std::move(row));
  }
  sync_run();
  return run;
}

/// The (y, ỹ) fake-label pairs an RCGAN or AmbientStyle run draws in one epoch,
/// replayed from the same streams the trainer uses.
inline std::vector<std::pair<int, int>> fake_label_pairs(const ExperimentConfig& cfg, const std::vector<int>& noisy,
                                                         int m, const ConfusionMatrix& C, std::size_t epoch) {
  if (cfg.variant != Variant::RCGAN && cfg.variant != Variant::AmbientStyle)
    throw InvalidArgument("fake_label_pairs: only defined for RCGAN and AmbientStyle");
  const std::size_t n = noisy.size(), B = std::min(cfg.batch, n);
  const detail::Sampler sampler(detail::fake_label_distribution(cfg, noisy, m, C));
  Rng label_rng = substream(cfg.seed, "labels", epoch);
  Rng corrupt_rng = substream(cfg.seed, "corrupt", epoch);
  std::vector<std::pair<int, int>> out;
  std::vector<int> y_gen, y_fake;
  // One batch per D update plus one per G update.
  const std::size_t steps = n / B, batches = steps + steps / cfg.d_steps_per_g;
  for (std::size_t s = 0; s < batches; ++s) {
    detail::draw_fake_labels(B, sampler, C, label_rng, corrupt_rng, y_gen, y_fake);
    for (std::size_t r = 0; r < B; ++r) out.emplace_back(y_gen[r], y_fake[r]);
  }
  return out;
}

/// Writes model.ncgl, metrics.csv, config.json and, for RCGAN-U, learned_channel.json.
inline std::vector<std::filesystem::path> write_run(const RunArtifacts& run, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths{dir / "model.ncgl", dir / "metrics.csv", dir / "config.json"};
  save_checkpoint(paths[0], run.all_parameters());
  std::ofstream(paths[1]) << metrics_csv(run.log);
  nlohmann::json arch{{"config", run.config},
                      {"generator", run.generator.arch},
                      {"discriminator", run.discriminator.arch}};
  if (run.h_star) arch["h_star"] = run.h_star->arch;
  std::ofstream(paths[2]) << arch.dump(2) << '\n';
  if (run.learned_channel) {
    paths.push_back(dir / "learned_channel.json");
    std::ofstream(paths.back()) << nlohmann::json(*run.learned_channel).dump(2) << '\n';
  }
  return paths;
}

/// Generator from a run directory written by write_run.
inline GeneratorParams load_generator(const std::filesystem::path& dir) {
  std::ifstream is(dir / "config.json");
  if (!is) throw InvalidArgument("cannot open " + (dir / "config.json").string());
  const auto j = nlohmann::json::parse(is);
  GeneratorParams G{j.at("generator").get<GeneratorArch>(), {}};
  const TensorMap all = load_checkpoint(dir / "model.ncgl");
  G.weights = detail::with_prefix(all, "gen/");
  for (auto& [k, v] : G.weights)
    if (v.shape.size() != 2) throw FormatError("checkpoint tensor '" + k + "' is not a matrix");
  return G;
}

}  // namespace ncgl
