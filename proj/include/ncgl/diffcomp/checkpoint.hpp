#pragma once

// Flat binary parameter checkpoint, little-endian:
//   "NCGL" | u32 version | per tensor: u32 name_len, name, u32 rank, u64 dims[rank], f64 values[]

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "ncgl/diffcomp/tensor.hpp"
#include "ncgl/error.hpp"

namespace ncgl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void write_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
bool read_le(std::istream& is, T& v) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) return false;
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  std::memcpy(&v, bytes, sizeof(T));
  return true;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const TensorMap& tensors) {
  os.write("NCGL", 4);
  detail::write_le<std::uint32_t>(os, kCheckpointVersion);
  for (const auto& [name, t] : tensors) {
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) detail::write_le<std::uint64_t>(os, d);
    for (double v : t.values) detail::write_le<double>(os, v);
  }
}

inline TensorMap read_checkpoint(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "NCGL", 4) != 0) throw FormatError("checkpoint: bad magic");
  std::uint32_t version = 0;
  if (!detail::read_le(is, version)) throw FormatError("checkpoint: truncated header");
  if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  TensorMap out;
  while (is.peek() != std::char_traits<char>::eof()) {
    std::uint32_t name_len = 0;
    if (!detail::read_le(is, name_len)) throw FormatError("checkpoint: truncated tensor header");
    if (name_len > (1u << 16)) throw FormatError("checkpoint: implausible name length");
    std::string name(name_len, '\0');
    std::uint32_t rank = 0;
    if (!is.read(name.data(), name_len) || !detail::read_le(is, rank) || rank > 8)
      throw FormatError("checkpoint: truncated tensor header");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) {
      std::uint64_t v = 0;
      if (!detail::read_le(is, v)) throw FormatError("checkpoint: truncated shape of '" + name + "'");
      d = static_cast<std::size_t>(v);
    }
    const std::size_t count = Tensor::element_count(shape);
    if (count > (std::size_t{1} << 32)) throw FormatError("checkpoint: implausible tensor size for '" + name + "'");
    std::vector<double> values(count);
    for (double& v : values)
      if (!detail::read_le(is, v)) throw FormatError("checkpoint: truncated values of '" + name + "'");
    out[name] = Tensor(std::move(shape), std::move(values));
  }
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path, const TensorMap& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot open " + path.string() + " for writing");
  write_checkpoint(os, tensors);
}

inline TensorMap load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("cannot open " + path.string());
  return read_checkpoint(is);
}

}  // namespace ncgl
