#pragma once

// Labeled datasets: Gaussian-mixture synthesis, label-noise injection, IDX
// ingestion, sample CSV exchange and snapshot persistence.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ncgl/channel.hpp"
#include "ncgl/diffcomp/checkpoint.hpp"
#include "ncgl/diffcomp/tensor.hpp"
#include "ncgl/error.hpp"
#include "ncgl/rng.hpp"

namespace ncgl {

struct LabeledDataset;

/// What the training loop may see: samples and observed labels only.
class TrainingView {
 public:
  explicit TrainingView(const LabeledDataset& ds) : ds_(&ds) {}
  const Tensor& x() const;
  const std::vector<int>& noisy_labels() const;
  int classes() const;
  std::size_t size() const { return x().rows(); }

 private:
  const LabeledDataset* ds_;
};

struct LabeledDataset {
  Tensor x;  // n × d_x
  std::optional<std::vector<int>> clean_labels;
  std::vector<int> noisy_labels;
  int classes = 0;
  std::optional<ConfusionMatrix> channel_used;
  std::uint64_t seed = 0;

  std::size_t size() const { return x.rows(); }
  std::size_t dim() const { return x.cols(); }
  TrainingView training_view() const { return TrainingView(*this); }

  void validate() const {
    const std::size_t n = x.rows();
    if (noisy_labels.size() != n) throw InvalidArgument("dataset: label count differs from sample count");
    if (clean_labels && clean_labels->size() != n) throw InvalidArgument("dataset: clean label count differs");
    auto check = [&](const std::vector<int>& l) {
      for (int y : l)
        if (y < 0 || y >= classes) throw InvalidArgument("dataset: label " + std::to_string(y) + " outside [0,m)");
    };
    check(noisy_labels);
    if (clean_labels) check(*clean_labels);
  }
};

inline const Tensor& TrainingView::x() const { return ds_->x; }
inline const std::vector<int>& TrainingView::noisy_labels() const { return ds_->noisy_labels; }
inline int TrainingView::classes() const { return ds_->classes; }

struct MixtureSpec {
  int m = 3;
  std::size_t d_x = 2;
  double sigma = 0.1;
  double radius = 1.0;
  std::size_t n_per_class = 2000;
  std::vector<std::vector<double>> means;  // empty: equally spaced on the circle

  std::vector<std::vector<double>> resolved_means() const {
    if (!means.empty()) return means;
    std::vector<std::vector<double>> out(static_cast<std::size_t>(m), std::vector<double>(d_x, 0.0));
    for (int k = 0; k < m; ++k) {
      const double a = 2.0 * std::numbers::pi * k / m;
      out[k][0] = radius * std::cos(a);
      if (d_x > 1) out[k][1] = radius * std::sin(a);
    }
    return out;
  }
};

inline void to_json(nlohmann::json& j, const MixtureSpec& s) {
  j = {{"m", s.m}, {"d_x", s.d_x}, {"sigma", s.sigma}, {"radius", s.radius}, {"n_per_class", s.n_per_class}};
  if (!s.means.empty()) j["means"] = s.means;
}
inline void from_json(const nlohmann::json& j, MixtureSpec& s) {
  s.m = j.value("m", s.m);
  s.d_x = j.value("d_x", s.d_x);
  s.sigma = j.value("sigma", s.sigma);
  s.radius = j.value("radius", s.radius);
  s.n_per_class = j.value("n_per_class", s.n_per_class);
  s.means = j.value("means", s.means);
}

/// Clean i.i.d. Gaussian samples, n_per_class per class, grouped by class.
inline LabeledDataset make_mixture(const MixtureSpec& spec, std::uint64_t seed) {
  if (spec.m < 1 || spec.d_x < 1 || !(spec.sigma >= 0.0)) throw InvalidArgument("make_mixture: invalid spec");
  const auto means = spec.resolved_means();
  if (means.size() != static_cast<std::size_t>(spec.m)) throw InvalidArgument("make_mixture: need one mean per class");
  LabeledDataset ds;
  ds.classes = spec.m;
  ds.seed = seed;
  const std::size_t n = spec.n_per_class * static_cast<std::size_t>(spec.m);
  ds.x = Tensor(n, spec.d_x);
  std::vector<int> labels(n);
  for (int k = 0; k < spec.m; ++k) {
    if (means[k].size() != spec.d_x) throw InvalidArgument("make_mixture: mean dimension mismatch");
    Rng rng = substream(seed, "mixture", static_cast<std::uint64_t>(k));
    for (std::size_t i = 0; i < spec.n_per_class; ++i) {
      const std::size_t r = static_cast<std::size_t>(k) * spec.n_per_class + i;
      labels[r] = k;
      for (std::size_t d = 0; d < spec.d_x; ++d) ds.x(r, d) = means[k][d] + spec.sigma * standard_normal(rng);
    }
  }
  ds.clean_labels = labels;
  ds.noisy_labels = labels;
  ds.channel_used = ConfusionMatrix::identity(spec.m);
  return ds;
}

/// Corrupts every clean label through C. Each sample draws from its own stream
/// keyed by its content, so the result does not depend on sample order.
inline LabeledDataset inject_noise(const LabeledDataset& ds, const ConfusionMatrix& C, std::uint64_t seed) {
  if (!ds.clean_labels) throw InvalidArgument("inject_noise: dataset has no clean labels");
  if (C.classes() != ds.classes)
    throw InvalidArgument("inject_noise: channel has " + std::to_string(C.classes()) + " classes, dataset has " +
                          std::to_string(ds.classes));
  LabeledDataset out = ds;
  out.channel_used = C;
  out.seed = seed;
  const std::size_t d = ds.dim();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int y = (*ds.clean_labels)[i];
    std::string key(reinterpret_cast<const char*>(&ds.x.values[i * d]), d * sizeof(double));
    key.append(reinterpret_cast<const char*>(&y), sizeof(int));
    Rng rng(derive_seed(seed, "inject-noise", fnv1a(key)));
    out.noisy_labels[i] = corrupt(y, C, rng);
  }
  return out;
}

/// Reorders samples (all label arrays move together).
inline LabeledDataset permuted(const LabeledDataset& ds, const std::vector<std::size_t>& order) {
  LabeledDataset out = ds;
  const std::size_t d = ds.dim();
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::copy_n(&ds.x.values[order[i] * d], d, &out.x.values[i * d]);
    out.noisy_labels[i] = ds.noisy_labels[order[i]];
    if (ds.clean_labels) (*out.clean_labels)[i] = (*ds.clean_labels)[order[i]];
  }
  return out;
}

// IDX (classic MNIST layout): big-endian u32 magic, u32 sizes, raw u8 payload.

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw InvalidArgument("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& what) {
  if (off + 4 > b.size()) throw FormatError(what + ": truncated header");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Images as an n × (rows·cols) tensor scaled to [0,1].
inline Tensor load_idx_images(const std::filesystem::path& path) {
  const auto b = detail::read_file_bytes(path);
  const std::string what = "IDX images " + path.string();
  const std::uint32_t magic = detail::be32(b, 0, what);
  if (magic != kIdxImagesMagic) throw FormatError(what + ": bad magic");
  const std::size_t n = detail::be32(b, 4, what), rows = detail::be32(b, 8, what), cols = detail::be32(b, 12, what);
  const std::size_t pixels = rows * cols;
  if (b.size() - 16 < n * pixels) throw FormatError(what + ": truncated payload");
  if (b.size() - 16 > n * pixels) throw FormatError(what + ": trailing bytes after payload");
  Tensor x(n, pixels);
  for (std::size_t i = 0; i < n * pixels; ++i) x.values[i] = b[16 + i] / 255.0;
  return x;
}

inline std::vector<int> load_idx_labels(const std::filesystem::path& path) {
  const auto b = detail::read_file_bytes(path);
  const std::string what = "IDX labels " + path.string();
  const std::uint32_t magic = detail::be32(b, 0, what);
  if (magic != kIdxLabelsMagic) throw FormatError(what + ": bad magic");
  const std::size_t n = detail::be32(b, 4, what);
  if (b.size() - 8 < n) throw FormatError(what + ": truncated payload");
  if (b.size() - 8 > n) throw FormatError(what + ": trailing bytes after payload");
  return {b.begin() + 8, b.end()};
}

/// Labels are taken as both clean and observed. `classes` = 0 infers max label + 1.
inline LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                               int classes = 0) {
  LabeledDataset ds;
  ds.x = load_idx_images(images);
  ds.noisy_labels = load_idx_labels(labels);
  if (ds.noisy_labels.size() != ds.x.rows())
    throw FormatError("IDX: " + std::to_string(ds.x.rows()) + " images but " + std::to_string(ds.noisy_labels.size()) +
                      " labels");
  int top = -1;
  for (int y : ds.noisy_labels) top = std::max(top, y);
  ds.classes = classes > 0 ? classes : top + 1;
  ds.clean_labels = ds.noisy_labels;
  ds.validate();
  return ds;
}

// Sample CSV: one row per sample, comma-separated reals; a non-numeric first line is a header.

inline Tensor read_samples_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidArgument("cannot open " + path.string());
  std::vector<double> vals;
  std::size_t cols = 0, rows = 0;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw FormatError(path.string() + ": non-numeric row " + std::to_string(rows + 1));
    }
    first = false;
    if (rows == 0) cols = row.size();
    if (row.size() != cols) throw FormatError(path.string() + ": ragged row " + std::to_string(rows + 1));
    vals.insert(vals.end(), row.begin(), row.end());
    ++rows;
  }
  return Tensor::matrix(rows, cols, std::move(vals));
}

// Snapshot: <stem>.json metadata plus <stem>.bin holding x as little-endian doubles.

inline void save_dataset(const LabeledDataset& ds, const std::filesystem::path& stem) {
  nlohmann::json meta{{"n", ds.size()},
                      {"d_x", ds.dim()},
                      {"classes", ds.classes},
                      {"seed", ds.seed},
                      {"noisy_labels", ds.noisy_labels}};
  if (ds.clean_labels) meta["clean_labels"] = *ds.clean_labels;
  if (ds.channel_used) meta["channel_used"] = *ds.channel_used;
  std::ofstream(stem.string() + ".json") << meta.dump(1) << '\n';
  std::ofstream bin(stem.string() + ".bin", std::ios::binary);
  for (double v : ds.x.values) detail::write_le<double>(bin, v);
  if (!bin) throw InvalidArgument("cannot write " + stem.string() + ".bin");
}

inline LabeledDataset load_dataset(const std::filesystem::path& stem) {
  std::ifstream js(stem.string() + ".json");
  if (!js) throw InvalidArgument("cannot open " + stem.string() + ".json");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(stem.string() + ".json: " + e.what());
  }
  LabeledDataset ds;
  const std::size_t n = meta.at("n"), d = meta.at("d_x");
  ds.classes = meta.at("classes");
  ds.seed = meta.value("seed", std::uint64_t{0});
  ds.noisy_labels = meta.at("noisy_labels").get<std::vector<int>>();
  if (meta.contains("clean_labels")) ds.clean_labels = meta["clean_labels"].get<std::vector<int>>();
  if (meta.contains("channel_used")) ds.channel_used = meta["channel_used"].get<ConfusionMatrix>();
  std::ifstream bin(stem.string() + ".bin", std::ios::binary);
  ds.x = Tensor(n, d);
  for (double& v : ds.x.values)
    if (!detail::read_le(bin, v)) throw FormatError(stem.string() + ".bin: truncated");
  ds.validate();
  return ds;
}

}  // namespace ncgl
