#pragma once

// Run manifests: enough to identify and replay a training run.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "ncgl/error.hpp"
#include "ncgl/rng.hpp"

namespace ncgl {

inline constexpr const char* kToolkitVersion = "0.1.0";

/// Compact dump with keys in sorted order; identical for any key ordering of the input.
inline std::string canonical_json(const nlohmann::json& j) { return j.dump(); }

/// 16 hex digits of FNV-1a over the canonical dump.
inline std::string config_hash(const nlohmann::json& j) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::uint64_t h = fnv1a(canonical_json(j));
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
  return out;
}

inline std::string iso_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string started_at;
  std::string finished_at;
  std::map<std::string, std::string> artifacts;  // role -> path relative to the run directory
  std::string version = kToolkitVersion;
  nlohmann::json config;  // the full resolved run configuration
  double noise_level = 0.0;

  static RunManifest begin(const nlohmann::json& config, std::uint64_t seed) {
    RunManifest m;
    m.config = config;
    m.config_hash = ncgl::config_hash(config);
    m.seed = seed;
    m.started_at = iso_timestamp(std::chrono::system_clock::now());
    return m;
  }

  void finish() { finished_at = iso_timestamp(std::chrono::system_clock::now()); }
};

inline void to_json(nlohmann::json& j, const RunManifest& m) {
  j = nlohmann::json{{"config_hash", m.config_hash}, {"seed", m.seed},       {"started_at", m.started_at},
                     {"finished_at", m.finished_at}, {"artifacts", m.artifacts}, {"version", m.version},
                     {"config", m.config},           {"noise_level", m.noise_level}};
}

inline void from_json(const nlohmann::json& j, RunManifest& m) {
  m.config_hash = j.at("config_hash").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.started_at = j.value("started_at", "");
  m.finished_at = j.value("finished_at", "");
  m.artifacts = j.value("artifacts", std::map<std::string, std::string>{});
  m.version = j.value("version", "");
  m.config = j.value("config", nlohmann::json::object());
  m.noise_level = j.value("noise_level", 0.0);
}

inline void save_manifest(const RunManifest& m, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw InvalidArgument("cannot write " + path.string());
  os << nlohmann::json(m).dump(2) << '\n';
}

inline RunManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidArgument("cannot open " + path.string());
  try {
    return nlohmann::json::parse(is).get<RunManifest>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace ncgl
