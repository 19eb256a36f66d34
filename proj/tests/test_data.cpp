#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "ncgl/data.hpp"

using namespace ncgl;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = NCGL_FIXTURE_DIR;

fs::path scratch_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("ncgl_data_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

void write_bytes(const fs::path& p, const std::vector<char>& b) {
  std::ofstream(p, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST(Mixture, DefaultMeansOnCircle) {
  MixtureSpec spec;
  const auto means = spec.resolved_means();
  ASSERT_EQ(means.size(), 3u);
  for (int k = 0; k < 3; ++k) {
    const double a = 2.0 * std::acos(-1.0) * k / 3;
    EXPECT_NEAR(means[k][0], std::cos(a), 1e-15);
    EXPECT_NEAR(means[k][1], std::sin(a), 1e-15);
    for (int l = 0; l < k; ++l)
      EXPECT_GE(std::hypot(means[k][0] - means[l][0], means[k][1] - means[l][1]), 4 * spec.sigma);
  }
}

TEST(Mixture, SampleMeansConcentrate) {
  MixtureSpec spec;
  const auto ds = make_mixture(spec, 3);
  ASSERT_EQ(ds.size(), 6000u);
  ASSERT_TRUE(ds.clean_labels.has_value());
  EXPECT_EQ(*ds.clean_labels, ds.noisy_labels);
  const auto means = spec.resolved_means();
  std::vector<std::vector<double>> acc(3, std::vector<double>(2, 0.0));
  std::vector<double> count(3, 0.0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int y = ds.noisy_labels[i];
    count[y] += 1;
    for (int d = 0; d < 2; ++d) acc[y][d] += ds.x(i, d);
  }
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(count[k], 2000.0);
    for (int d = 0; d < 2; ++d)
      EXPECT_LE(std::abs(acc[k][d] / count[k] - means[k][d]), 4 * spec.sigma / std::sqrt(count[k]));
  }
}

TEST(Mixture, EmptyAndDeterministic) {
  MixtureSpec spec;
  spec.n_per_class = 0;
  EXPECT_EQ(make_mixture(spec, 1).size(), 0u);
  spec.n_per_class = 10;
  EXPECT_EQ(make_mixture(spec, 9).x, make_mixture(spec, 9).x);
  EXPECT_NE(make_mixture(spec, 9).x, make_mixture(spec, 10).x);
}

TEST(Noise, IdentityKeepsLabels) {
  const auto ds = make_mixture(MixtureSpec{}, 1);
  const auto noisy = inject_noise(ds, ConfusionMatrix::identity(3), 2);
  EXPECT_EQ(noisy.noisy_labels, *ds.clean_labels);
}

TEST(Noise, FlipRateConcentrates) {
  MixtureSpec spec;
  spec.m = 2;
  spec.n_per_class = 50000;
  const auto ds = make_mixture(spec, 4);
  const auto noisy = inject_noise(ds, make_uniform_flip(2, 0.7), 5);
  std::size_t flips = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) flips += noisy.noisy_labels[i] != (*ds.clean_labels)[i];
  EXPECT_NEAR(static_cast<double>(flips) / static_cast<double>(ds.size()), 0.3, 0.005);

  const auto all = inject_noise(ds, make_uniform_flip(2, 0.0), 6);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_NE(all.noisy_labels[i], (*ds.clean_labels)[i]);
}

TEST(Noise, ShuffleCommutesWithInjection) {
  MixtureSpec spec;
  spec.n_per_class = 200;
  const auto ds = make_mixture(spec, 7);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(8);
  std::shuffle(order.begin(), order.end(), rng);
  const auto C = make_uniform_flip(3, 0.6);
  const auto a = permuted(inject_noise(ds, C, 9), order);
  const auto b = inject_noise(permuted(ds, order), C, 9);
  EXPECT_EQ(a.noisy_labels, b.noisy_labels);
  EXPECT_EQ(a.x, b.x);
}

TEST(Noise, Errors) {
  auto ds = make_mixture(MixtureSpec{}, 1);
  EXPECT_THROW(inject_noise(ds, make_uniform_flip(4, 0.7), 1), InvalidArgument);
  ds.clean_labels.reset();
  EXPECT_THROW(inject_noise(ds, make_uniform_flip(3, 0.7), 1), InvalidArgument);
}

TEST(TrainingViewTest, ExposesNoisyLabelsOnly) {
  const auto ds = inject_noise(make_mixture(MixtureSpec{}, 1), make_uniform_flip(3, 0.5), 2);
  const auto v = ds.training_view();
  EXPECT_EQ(v.noisy_labels(), ds.noisy_labels);
  EXPECT_EQ(v.size(), ds.size());
  EXPECT_EQ(v.classes(), 3);
}

TEST(Idx, FourImageFixture) {
  const auto ds = load_idx(kFixtures / "four-images.idx3-ubyte", kFixtures / "four-labels.idx1-ubyte");
  EXPECT_EQ(ds.x.rows(), 4u);
  EXPECT_EQ(ds.x.cols(), 784u);
  EXPECT_EQ(ds.noisy_labels, (std::vector<int>{3, 1, 4, 1}));
  EXPECT_EQ(ds.classes, 5);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(ds.x(k, k * 28 + k), 1.0);
    EXPECT_DOUBLE_EQ(ds.x(k, 783), 51.0 * static_cast<double>(k) / 255.0);
    double total = 0.0;
    for (std::size_t j = 0; j < 784; ++j) total += ds.x(k, j);
    EXPECT_DOUBLE_EQ(total, 1.0 + 51.0 * static_cast<double>(k) / 255.0);
  }
  EXPECT_EQ(load_idx(kFixtures / "four-images.idx3-ubyte", kFixtures / "four-labels.idx1-ubyte", 10).classes, 10);
}

TEST(Idx, TruncatedAndMalformed) {
  const auto dir = scratch_dir("idx");
  auto img = read_bytes(kFixtures / "four-images.idx3-ubyte");
  auto lab = read_bytes(kFixtures / "four-labels.idx1-ubyte");

  write_bytes(dir / "short.idx3", std::vector<char>(img.begin(), img.end() - 1));
  EXPECT_THROW(load_idx_images(dir / "short.idx3"), FormatError);
  write_bytes(dir / "header.idx3", std::vector<char>(img.begin(), img.begin() + 6));
  EXPECT_THROW(load_idx_images(dir / "header.idx3"), FormatError);
  write_bytes(dir / "short.idx1", std::vector<char>(lab.begin(), lab.end() - 2));
  EXPECT_THROW(load_idx_labels(dir / "short.idx1"), FormatError);

  auto bad = img;
  bad[3] = 0x01;
  write_bytes(dir / "magic.idx3", bad);
  EXPECT_THROW(load_idx_images(dir / "magic.idx3"), FormatError);
  EXPECT_THROW(load_idx_labels(kFixtures / "four-images.idx3-ubyte"), FormatError);

  auto three = lab;
  three[7] = 3;
  three.pop_back();
  write_bytes(dir / "three.idx1", three);
  EXPECT_THROW(load_idx(kFixtures / "four-images.idx3-ubyte", dir / "three.idx1"), FormatError);
  EXPECT_THROW(load_idx_images(dir / "missing"), InvalidArgument);
  fs::remove_all(dir);
}

TEST(Idx, EmptyFiles) {
  const auto dir = scratch_dir("idx_empty");
  const char header[] = {0, 0, 8, 3, 0, 0, 0, 0, 0, 0, 0, 28, 0, 0, 0, 28};
  write_bytes(dir / "empty.idx3", std::vector<char>(header, header + 16));
  EXPECT_TRUE(load_idx_labels(kFixtures / "empty-labels.idx1-ubyte").empty());
  const auto ds = load_idx(dir / "empty.idx3", kFixtures / "empty-labels.idx1-ubyte");
  EXPECT_EQ(ds.size(), 0u);
  fs::remove_all(dir);
}

TEST(SamplesCsv, HeaderAndRagged) {
  const auto dir = scratch_dir("csv");
  std::ofstream(dir / "a.csv") << "x0,x1\n1.5,-2\n0,3e-1\n";
  const Tensor t = read_samples_csv(dir / "a.csv");
  EXPECT_EQ(t, Tensor({2, 2}, {1.5, -2.0, 0.0, 0.3}));
  std::ofstream(dir / "b.csv") << "1,2\n3\n";
  EXPECT_THROW(read_samples_csv(dir / "b.csv"), FormatError);
  std::ofstream(dir / "c.csv") << "1,2\nfoo,bar\n";
  EXPECT_THROW(read_samples_csv(dir / "c.csv"), FormatError);
  fs::remove_all(dir);
}

TEST(Snapshot, RoundTrip) {
  const auto dir = scratch_dir("snap");
  MixtureSpec spec;
  spec.n_per_class = 20;
  const auto ds = inject_noise(make_mixture(spec, 11), make_uniform_flip(3, 0.7), 12);
  save_dataset(ds, dir / "ds");
  const auto back = load_dataset(dir / "ds");
  EXPECT_EQ(back.x, ds.x);
  EXPECT_EQ(back.noisy_labels, ds.noisy_labels);
  EXPECT_EQ(back.clean_labels, ds.clean_labels);
  EXPECT_EQ(back.classes, ds.classes);
  EXPECT_EQ(back.channel_used, ds.channel_used);
  EXPECT_EQ(back.seed, ds.seed);

  std::filesystem::resize_file(dir / "ds.bin", 8);
  EXPECT_THROW(load_dataset(dir / "ds"), FormatError);
  fs::remove_all(dir);
}

TEST(Dataset, ValidateRejectsOutOfRangeLabels) {
  LabeledDataset ds;
  ds.x = Tensor(2, 1);
  ds.noisy_labels = {0, 3};
  ds.classes = 3;
  EXPECT_THROW(ds.validate(), InvalidArgument);
  ds.noisy_labels = {0};
  EXPECT_THROW(ds.validate(), InvalidArgument);
}
