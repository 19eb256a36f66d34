#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "ncgl/data.hpp"
#include "ncgl/training.hpp"

using namespace ncgl;

namespace {

double eval_scalar(Graph& g) { return g.forward({}, {}).values[0]; }

LabeledDataset tiny_data(double pi, std::uint64_t seed = 1) {
  MixtureSpec spec;
  spec.n_per_class = 100;
  const auto clean = make_mixture(spec, seed);
  return inject_noise(clean, make_uniform_flip(3, pi), seed + 1);
}

ExperimentConfig tiny_config(Variant v, std::size_t epochs = 2) {
  ExperimentConfig c;
  c.variant = v;
  c.epochs = epochs;
  c.batch = 32;
  c.gen_hidden = {8};
  c.disc_hidden = {8};
  c.d_V = 4;
  c.d_v = 4;
  c.hstar_epochs = 2;
  c.seed = 5;
  return c;
}

}  // namespace

TEST(Loss, ZeroMarginHandInstance) {
  Graph g;
  const NodeId r = g.constant(Tensor::scalar(0.3)), f = g.constant(Tensor::scalar(0.6));
  zero_margin_discriminator_loss(g, r, f);
  EXPECT_NEAR(eval_scalar(g), 0.6, 1e-15);
  EXPECT_NEAR(hinge(0.3), 0.4, 1e-15);
  EXPECT_NEAR(hinge(1 - 0.6), 0.2, 1e-15);
}

TEST(Loss, MarginHingeMatchesPhiOfHalfScore) {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    const double s = 4.0 * standard_normal(rng);
    Graph g;
    const NodeId x = g.constant(Tensor::scalar(s));
    const NodeId a = real_margin_hinge(g, x);
    const NodeId b = fake_margin_hinge(g, x);
    g.forward({}, {});
    EXPECT_NEAR(g.value(a).values[0], hinge(s / 2), 1e-12);
    EXPECT_NEAR(g.value(b).values[0], hinge(-s / 2), 1e-12);
  }
  Graph g;
  discriminator_loss(g, LossKind::Hinge, g.constant(Tensor::scalar(0.3)), g.constant(Tensor::scalar(0.6)));
  EXPECT_NEAR(eval_scalar(g), 0.7 + 1.6, 1e-15);
}

TEST(Loss, PhiMHandInstance) {
  Graph g;
  const NodeId w = g.constant(Tensor({1, 2}, {0.7, 0.3}));
  const NodeId d = g.constant(Tensor({1, 2}, {0.2, 0.9}));
  channel_expectation(g, w, g.hinge(g.affine(d, -1.0, 1.0)));
  EXPECT_NEAR(eval_scalar(g), 0.24, 1e-15);
}

TEST(Loss, PhiMWithIdentityIsCleanTerm) {
  Rng rng(2);
  const Tensor D({2, 3}, {0.1, 0.7, 0.4, 0.9, 0.2, 0.55});
  const std::vector<int> y{1, 2};
  Graph g;
  const NodeId rows = g.matmul(g.constant(one_hot(y, 3)), g.constant(Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1})));
  channel_expectation(g, rows, g.hinge(g.affine(g.constant(D), -1.0, 1.0)));
  const Tensor out = g.forward({}, {});
  EXPECT_EQ(out.values[0], hinge(1 - 0.7));
  EXPECT_EQ(out.values[1], hinge(1 - 0.55));
}

TEST(Loss, PhiMGradientInLogits) {
  Rng rng(3);
  const std::size_t m = 4, B = 5;
  Tensor logits(m, m);
  for (double& v : logits.values) v = standard_normal(rng);
  Tensor values(B, m);
  for (double& v : values.values) v = uniform01(rng);
  std::vector<int> y(B);
  for (int& v : y) v = uniform_int(rng, static_cast<int>(m));

  auto loss = [&](const Tensor& L, Graph& g) {
    const NodeId rows = g.matmul(g.constant(one_hot(y, static_cast<int>(m))), g.row_softmax(g.parameter("logits", m, m)));
    g.mean_batch(channel_expectation(g, rows, g.constant(values)));
    return g.forward({}, {{"logits", L}}).values[0];
  };
  Graph g;
  loss(logits, g);
  g.backward();
  const Tensor grad = g.parameter_gradients().at("logits");
  const double h = 1e-6;
  for (std::size_t i = 0; i < logits.values.size(); ++i) {
    Tensor up = logits, dn = logits;
    up.values[i] += h;
    dn.values[i] -= h;
    Graph gu, gdn;
    const double fd = (loss(up, gu) - loss(dn, gdn)) / (2 * h);
    EXPECT_NEAR(grad.values[i], fd, 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Schedule, EffectiveNoise) {
  EXPECT_NEAR(effective_noise(0.5, 0.7, 10), 0.5 * (0.7 - 0.3 / 9) + 0.3 / 9, 1e-15);
  EXPECT_NEAR(effective_noise(0.5, 0.7, 10), 0.3667, 1e-4);
  EXPECT_NEAR(effective_noise(1.0, 0.7, 10), 0.7, 1e-15);
  EXPECT_NEAR(effective_noise(0.4, 1.0, 3), 0.4, 1e-15);
  EXPECT_THROW(effective_noise(1.5, 0.7, 3), InvalidArgument);
}

TEST(Schedule, EffectiveNoiseMatchesComposedChannel) {
  const auto C = make_uniform_flip(5, 0.7);
  const auto U = make_uniform_flip(5, 0.6);
  Matrix P(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      for (int k = 0; k < 5; ++k) P(i, j) += C(i, k) * U(k, j);
  EXPECT_NEAR(P(0, 0), effective_noise(0.6, 0.7, 5), 1e-15);
}

TEST(Schedule, ThreePhases) {
  NoiseSchedule s;
  EXPECT_EQ(s.pi_tilde(0, 100), 0.5);
  EXPECT_EQ(s.pi_tilde(29, 100), 0.5);
  EXPECT_NEAR(s.pi_tilde(55, 100), 0.75, 1e-12);
  EXPECT_EQ(s.pi_tilde(80, 100), 1.0);
  EXPECT_EQ(s.pi_tilde(99, 100), 1.0);
}

TEST(ChannelEstimateTest, DiagonalInitialization) {
  ExperimentConfig c;
  c.variant = Variant::RCGAN_U;
  EXPECT_EQ(c.m_init_diag_value(10), 0.2);
  const auto M = ChannelEstimate::diagonal(10, c.m_init_diag_value(10)).realized();
  for (int i = 0; i < 10; ++i) {
    double s = 0.0;
    for (int j = 0; j < 10; ++j) {
      EXPECT_NEAR(M(i, j), i == j ? 0.2 : 0.8 / 9, 1e-12);
      s += M(i, j);
    }
    EXPECT_NEAR(s, 1.0, 1e-15);
  }
  EXPECT_TRUE(analyze(M).is_diagonally_dominant);
  EXPECT_TRUE(analyze(ChannelEstimate::diagonal(3, c.m_init_diag_value(3)).realized()).is_diagonally_dominant);
}

TEST(ChannelEstimateTest, RealizedRowsSumToOne) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    Matrix L(4, 4);
    for (double& v : L.data()) v = 20.0 * standard_normal(rng);
    const auto M = ChannelEstimate::realize(L);
    for (int i = 0; i < 4; ++i) {
      double s = 0.0;
      for (int j = 0; j < 4; ++j) s += M(i, j);
      EXPECT_NEAR(s, 1.0, 1e-15);
    }
  }
}

TEST(Config, ValidationAndRoundTrip) {
  ExperimentConfig c;
  c.lambda = -1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c.lambda = 0.5;
  c.batch = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c.batch = 16;
  c.m_lr_multiplier = 0.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c.m_lr_multiplier = 10.0;
  c.loss = LossKind::Logistic;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c.loss = LossKind::HingeZeroMargin;
  c.variant = Variant::AmbientStyle;
  c.validate();
  const auto back = nlohmann::json(c).get<ExperimentConfig>();
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(c));
  EXPECT_EQ(c.lambda_value(), 0.5);
  EXPECT_EQ(ExperimentConfig{Variant::RCGAN_U}.lambda_value(), 1.0);
  EXPECT_EQ(ExperimentConfig{}.lambda_value(), 0.0);
  EXPECT_THROW(nlohmann::json({{"variant", "GAN"}}).get<ExperimentConfig>(), InvalidArgument);
}

TEST(Train, ChannelContract) {
  const auto ds = tiny_data(0.8);
  const auto C = make_uniform_flip(3, 0.8);
  EXPECT_THROW(train(tiny_config(Variant::RCGAN), ds.training_view(), std::nullopt), InvalidArgument);
  EXPECT_THROW(train(tiny_config(Variant::RCGAN_U), ds.training_view(), C), InvalidArgument);
  EXPECT_THROW(train(tiny_config(Variant::Unbiased), ds.training_view(), make_uniform_flip(3, 1.0 / 3)),
               PreconditionViolation);
  EXPECT_THROW(train(tiny_config(Variant::RCGAN), ds.training_view(), make_uniform_flip(4, 0.8)), InvalidArgument);
}

TEST(Train, DeterministicUnderSeed) {
  const auto ds = tiny_data(0.7);
  for (Variant v : {Variant::RCGAN, Variant::RCGAN_U, Variant::RCGAN_plus_y}) {
    const std::optional<ConfusionMatrix> C =
        needs_known_channel(v) ? std::optional(make_uniform_flip(3, 0.7)) : std::nullopt;
    const auto a = train(tiny_config(v), ds.training_view(), C);
    const auto b = train(tiny_config(v), ds.training_view(), C);
    EXPECT_EQ(metrics_csv(a.log), metrics_csv(b.log));
    EXPECT_EQ(a.all_parameters(), b.all_parameters());
  }
}

TEST(Train, IdentityChannelReducesToBiased) {
  const auto ds = tiny_data(1.0);
  const auto I = ConfusionMatrix::identity(3);
  const auto biased = train(tiny_config(Variant::Biased), ds.training_view(), std::nullopt);
  const auto rcgan = train(tiny_config(Variant::RCGAN), ds.training_view(), I);
  ASSERT_EQ(biased.log.size(), rcgan.log.size());
  for (std::size_t e = 0; e < biased.log.size(); ++e) {
    EXPECT_EQ(biased.log[e].loss_d, rcgan.log[e].loss_d);
    EXPECT_EQ(biased.log[e].loss_g, rcgan.log[e].loss_g);
  }
  const auto unbiased = train(tiny_config(Variant::Unbiased, 1), ds.training_view(), I);
  const auto biased1 = train(tiny_config(Variant::Biased, 1), ds.training_view(), std::nullopt);
  EXPECT_NEAR(unbiased.log[0].loss_d, biased1.log[0].loss_d, 1e-9);
}

TEST(Train, ProjectionMaintained) {
  const auto ds = tiny_data(0.7);
  const auto run = train(tiny_config(Variant::RCGAN), ds.training_view(), make_uniform_flip(3, 0.7));
  EXPECT_TRUE(satisfies_constraints(run.discriminator));
}

TEST(Train, RcganUReportsLearnedChannel) {
  const auto ds = tiny_data(0.7);
  Evaluator ev;
  ev.m_error = [](const ConfusionMatrix& M) { return M(0, 0); };
  const auto run = train(tiny_config(Variant::RCGAN_U), ds.training_view(), std::nullopt, ev);
  ASSERT_TRUE(run.learned_channel.has_value());
  ASSERT_TRUE(run.h_star.has_value());
  EXPECT_FALSE(std::isnan(run.log.back().m_error));
  EXPECT_TRUE(std::isnan(run.log.back().gen_label_acc));
}

TEST(Train, FakeLabelsFollowChannelRows) {
  const auto ds = tiny_data(0.7);
  const auto C = make_uniform_flip(3, 0.7);
  auto cfg = tiny_config(Variant::RCGAN);
  std::vector<int> noisy(6000);
  for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] = static_cast<int>(i % 3);
  const auto pairs = fake_label_pairs(cfg, noisy, 3, C, 0);
  std::vector<std::vector<double>> counts(3, std::vector<double>(3, 0.0));
  std::vector<double> totals(3, 0.0);
  for (auto [y, yt] : pairs) {
    counts[y][yt] += 1;
    totals[y] += 1;
  }
  for (int y = 0; y < 3; ++y)
    for (int j = 0; j < 3; ++j) {
      const double p = C(y, j), n = totals[y];
      EXPECT_LE(std::abs(counts[y][j] / n - p), 3.0 * std::sqrt(p * (1 - p) / n));
    }
  EXPECT_THROW(fake_label_pairs(tiny_config(Variant::Biased), noisy, 3, C, 0), InvalidArgument);
}

TEST(Train, DivergenceKeepsLastGoodParameters) {
  const auto ds = tiny_data(0.7);
  auto cfg = tiny_config(Variant::RCGAN, 3);
  cfg.lr_d = 1e300;
  cfg.lr_g = 1e300;
  try {
    train(cfg, ds.training_view(), make_uniform_flip(3, 0.7));
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    for (const auto& [k, v] : e.last_good())
      for (double x : v.values) EXPECT_TRUE(std::isfinite(x)) << k;
  }
}

TEST(Logging, MetricsCsvFormat) {
  MetricRow r;
  r.epoch = 3;
  r.variant = "RCGAN";
  r.loss_d = 0.5;
  r.loss_g = -0.25;
  r.gen_label_acc = 0.875;
  EXPECT_EQ(metrics_csv({r}), "epoch,variant,loss_d,loss_g,gen_label_acc,m_error\n3,RCGAN,0.5,-0.25,0.875,\n");
}

TEST(Io, WriteRunAndLoadGenerator) {
  const auto ds = tiny_data(0.7);
  const auto run = train(tiny_config(Variant::RCGAN_U, 1), ds.training_view(), std::nullopt);
  const auto dir = std::filesystem::temp_directory_path() / "ncgl_write_run";
  std::filesystem::remove_all(dir);
  const auto paths = write_run(run, dir);
  EXPECT_EQ(paths.size(), 4u);
  const auto G = load_generator(dir);
  EXPECT_EQ(G.weights, run.generator.weights);
  std::filesystem::remove_all(dir);
}
