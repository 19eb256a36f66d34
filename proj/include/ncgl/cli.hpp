#pragma once

// Command-line harness: verify, train, recover and report subcommands.
// Exit codes: 0 success, 1 verification or experiment failure, 2 usage error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ncgl/data.hpp"
#include "ncgl/manifest.hpp"
#include "ncgl/metrics.hpp"
#include "ncgl/recovery.hpp"
#include "ncgl/report.hpp"
#include "ncgl/training.hpp"
#include "ncgl/verify.hpp"

namespace ncgl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Everything one `train` invocation needs. JSON layout:
///   experiment: ExperimentConfig
///   data:       {"kind": "mixture", "mixture": {...}, "seed": N}
///             | {"kind": "idx", "images": PATH, "labels": PATH, "classes": M}
///             | {"kind": "snapshot", "stem": PATH}
///   noise:      {"pi": P} | {"m": M, "rows": [...]}         channel used to corrupt labels
///   channel:    "noise" | {"m": M, "rows": [...]}           channel handed to the trainer
///   evaluation: {"samples", "classifier_epochs", "recovery_samples", "recovery": {...}}
struct RunSpec {
  ExperimentConfig experiment;
  nlohmann::json data = {{"kind", "mixture"}};
  nlohmann::json noise;    // null: labels kept clean
  nlohmann::json channel;  // null: trainer gets no channel
  std::size_t eval_samples = 2000;
  std::size_t classifier_epochs = 10;
  std::size_t recovery_samples = 0;
  RecoveryConfig recovery;
  std::filesystem::path base_dir;  // relative data paths resolve here

  void validate() const {
    experiment.validate();
    const Variant v = experiment.variant;
    if (forbids_known_channel(v) && !channel.is_null())
      throw InvalidArgument("config: RCGAN_U learns the channel; remove the 'channel' entry");
    if (needs_known_channel(v) && channel.is_null())
      throw InvalidArgument(std::string("config: variant ") + variant_name(v) + " needs a 'channel' entry");
    if (channel.is_string() && channel.get<std::string>() != "noise")
      throw InvalidArgument("config: 'channel' must be \"noise\" or a matrix");
    if (channel.is_string() && noise.is_null())
      throw InvalidArgument("config: 'channel' refers to the noise channel but 'noise' is missing");
    if (eval_samples == 0) throw InvalidArgument("config: evaluation.samples must be >= 1");
    recovery.validate();
  }
};

inline void to_json(nlohmann::json& j, const RunSpec& s) {
  j = nlohmann::json{{"experiment", s.experiment},
                     {"data", s.data},
                     {"evaluation",
                      {{"samples", s.eval_samples},
                       {"classifier_epochs", s.classifier_epochs},
                       {"recovery_samples", s.recovery_samples},
                       {"recovery", {{"restarts", s.recovery.restarts}, {"steps", s.recovery.steps}, {"lr", s.recovery.lr}}}}}};
  if (!s.noise.is_null()) j["noise"] = s.noise;
  if (!s.channel.is_null()) j["channel"] = s.channel;
}

inline void from_json(const nlohmann::json& j, RunSpec& s) {
  if (!j.is_object()) throw InvalidArgument("config: expected a JSON object");
  for (const auto& [k, _] : j.items())
    if (k != "experiment" && k != "data" && k != "noise" && k != "channel" && k != "evaluation")
      throw InvalidArgument("config: unknown key '" + k + "'");
  s.experiment = j.at("experiment").get<ExperimentConfig>();
  s.data = j.value("data", s.data);
  s.noise = j.value("noise", nlohmann::json());
  s.channel = j.value("channel", nlohmann::json());
  if (j.contains("evaluation")) {
    const auto& e = j["evaluation"];
    s.eval_samples = e.value("samples", s.eval_samples);
    s.classifier_epochs = e.value("classifier_epochs", s.classifier_epochs);
    s.recovery_samples = e.value("recovery_samples", s.recovery_samples);
    if (e.contains("recovery")) {
      const auto& r = e["recovery"];
      s.recovery.restarts = r.value("restarts", s.recovery.restarts);
      s.recovery.steps = r.value("steps", s.recovery.steps);
      s.recovery.lr = r.value("lr", s.recovery.lr);
    }
  }
}

/// Accepts a run configuration or a manifest written by a previous run.
inline RunSpec load_run_spec(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidArgument("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
  if (j.is_object() && j.contains("config_hash") && j.contains("config")) j = j["config"];
  RunSpec s;
  try {
    s = j.get<RunSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
  s.base_dir = path.parent_path();
  return s;
}

inline ConfusionMatrix resolve_channel(const nlohmann::json& j, int m) {
  if (j.contains("pi")) return make_uniform_flip(m, j.at("pi").get<double>());
  const auto C = j.get<ConfusionMatrix>();
  if (C.classes() != m) throw InvalidArgument("config: channel has the wrong number of classes");
  return C;
}

inline double noise_level(const ConfusionMatrix& C) {
  double diag = 0.0;
  for (int i = 0; i < C.classes(); ++i) diag += C(i, i);
  return 1.0 - diag / C.classes();
}

inline LabeledDataset load_clean_data(const RunSpec& spec, std::uint64_t seed) {
  const std::string kind = spec.data.value("kind", "mixture");
  const auto path = [&](const char* key) {
    std::filesystem::path p = spec.data.at(key).get<std::string>();
    return p.is_relative() ? spec.base_dir / p : p;
  };
  if (kind == "mixture")
    return make_mixture(spec.data.value("mixture", MixtureSpec{}), spec.data.value("seed", derive_seed(seed, "data")));
  if (kind == "idx") return load_idx(path("images"), path("labels"), spec.data.value("classes", 0));
  if (kind == "snapshot") return load_dataset(path("stem"));
  throw InvalidArgument("config: unknown data kind '" + kind + "'");
}

/// Per-class means of the clean samples.
inline std::vector<std::vector<double>> class_means(const LabeledDataset& ds) {
  std::vector<std::vector<double>> means(static_cast<std::size_t>(ds.classes), std::vector<double>(ds.dim(), 0.0));
  std::vector<std::size_t> counts(means.size(), 0);
  const auto& labels = ds.clean_labels ? *ds.clean_labels : ds.noisy_labels;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ++counts[labels[i]];
    for (std::size_t d = 0; d < ds.dim(); ++d) means[labels[i]][d] += ds.x(i, d);
  }
  for (std::size_t c = 0; c < means.size(); ++c)
    for (double& v : means[c]) v /= static_cast<double>(std::max<std::size_t>(counts[c], 1));
  return means;
}

struct TrainOutcome {
  RunArtifacts run;
  EvalReport report;
  RunManifest manifest;
};

/// Full pipeline: data, corruption, evaluation classifier, training, evaluation and artifacts in `out`.
inline TrainOutcome execute_run(RunSpec spec, std::optional<std::uint64_t> seed_override,
                                const std::filesystem::path& out) {
  if (seed_override) spec.experiment.seed = *seed_override;
  spec.validate();
  const std::uint64_t seed = spec.experiment.seed;
  TrainOutcome o;
  o.manifest = RunManifest::begin(nlohmann::json(spec), seed);

  const LabeledDataset clean = load_clean_data(spec, seed);
  std::optional<ConfusionMatrix> noise;
  if (!spec.noise.is_null()) noise = resolve_channel(spec.noise, clean.classes);
  const LabeledDataset ds = noise ? inject_noise(clean, *noise, derive_seed(seed, "noise")) : clean;
  std::optional<ConfusionMatrix> known;
  if (spec.channel.is_string())
    known = noise;
  else if (!spec.channel.is_null())
    known = resolve_channel(spec.channel, clean.classes);
  o.manifest.noise_level = noise ? noise_level(*noise) : 0.0;

  const auto f = train_evaluation_classifier(clean, derive_seed(seed, "eval-classifier"), spec.classifier_epochs);
  const std::uint64_t eval_seed = derive_seed(seed, "evaluation");
  o.run = train(spec.experiment, ds.training_view(), known, make_evaluator(f.params, spec.eval_samples, eval_seed, noise));

  Rng rng = substream(eval_seed, "final");
  o.report.gen_label_acc = generator_label_accuracy(o.run.generator, f.params, spec.eval_samples, rng);
  o.report.per_class_mean_err = per_class_mean_error(o.run.generator, class_means(clean), 500, rng);
  if (o.run.learned_channel && noise) o.report.m_error = confusion_error(*o.run.learned_channel, *noise);
  if (spec.recovery_samples > 0)
    o.report.recovery_acc = recovery_accuracy(o.run.generator, ds, spec.recovery, spec.recovery_samples, rng);

  std::filesystem::create_directories(out);
  for (const auto& p : write_run(o.run, out)) o.manifest.artifacts[p.stem().string()] = p.filename().string();
  std::ofstream(out / "eval.json") << nlohmann::json(o.report).dump(2) << '\n';
  o.manifest.artifacts["eval"] = "eval.json";
  o.manifest.finish();
  save_manifest(o.manifest, out / "manifest.json");
  return o;
}

inline std::string recovery_csv(const std::vector<RecoveryResult>& results) {
  std::string out = "index,label";
  const std::size_t m = results.empty() ? 0 : results.front().residuals.size();
  for (std::size_t c = 0; c < m; ++c) out += ",residual_" + std::to_string(c);
  out += '\n';
  for (std::size_t i = 0; i < results.size(); ++i) {
    out += std::to_string(i) + "," + std::to_string(results[i].label);
    for (double r : results[i].residuals) out += "," + format_metric(r);
    out += '\n';
  }
  return out;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Noisy-label conditional GAN toolkit"};
  app.require_subcommand(1);

  std::size_t instances = 1000, channels = 50;
  std::uint64_t verify_seed = 0;
  auto* verify = app.add_subcommand("verify", "Randomized checks of the distance bounds");
  verify->add_option("--instances", instances, "Random (P, Q, C) instances")->check(CLI::PositiveNumber);
  verify->add_option("--channels", channels, "Random channels for the tightness witnesses")->check(CLI::PositiveNumber);
  verify->add_option("--seed", verify_seed, "Base seed");

  std::string config_path, out_dir = "run";
  std::optional<std::uint64_t> train_seed;
  auto* trn = app.add_subcommand("train", "Train one variant from a JSON config");
  trn->add_option("--config", config_path, "Run configuration or manifest")->required();
  trn->add_option("--seed", train_seed, "Overrides experiment.seed");
  trn->add_option("--out", out_dir, "Output directory");

  std::string checkpoint, input, output, recovery_config;
  std::uint64_t recover_seed = 0;
  auto* rec = app.add_subcommand("recover", "Recover labels of CSV samples with a trained generator");
  rec->add_option("--checkpoint", checkpoint, "Run directory holding model.ncgl and config.json")->required();
  rec->add_option("--input", input, "Sample CSV, one row per sample")->required();
  rec->add_option("--output", output, "Output CSV (stdout when omitted)");
  rec->add_option("--config", recovery_config, "Recovery settings JSON: restarts, steps, lr");
  rec->add_option("--seed", recover_seed, "Base seed for latent restarts");

  std::string pattern, report_out = ".", metric = "gen_label_acc";
  auto* rep = app.add_subcommand("report", "Summarize metric logs across runs");
  rep->add_option("--glob", pattern, "Pattern matching metrics CSV files")->required();
  rep->add_option("--out", report_out, "Directory for summary.csv and summary.svg");
  rep->add_option("--metric", metric, "Charted metric")
      ->check(CLI::IsMember({"gen_label_acc", "m_error", "loss_d", "loss_g"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*verify) {
      auto rows = verify_bounds(instances, verify_seed);
      for (auto& r : verify_tightness(channels, verify_seed)) rows.push_back(r);
      print_suite_table(out, rows);
      for (const auto& r : rows)
        if (!r.ok()) return kExitFailure;
      return kExitOk;
    }
    if (*trn) {
      const auto o = execute_run(load_run_spec(config_path), train_seed, out_dir);
      out << "variant " << variant_name(o.run.config.variant) << ", seed " << o.manifest.seed << ", "
          << o.run.log.size() << " epochs\n";
      out << "gen_label_acc " << o.report.gen_label_acc << "\n";
      if (o.report.m_error) out << "m_error " << *o.report.m_error << "\n";
      if (o.report.recovery_acc) out << "recovery_acc " << *o.report.recovery_acc << "\n";
      out << "artifacts in " << out_dir << "\n";
      return kExitOk;
    }
    if (*rec) {
      RecoveryConfig cfg;
      if (!recovery_config.empty()) {
        std::ifstream is(recovery_config);
        if (!is) throw InvalidArgument("cannot open " + recovery_config);
        const auto j = nlohmann::json::parse(is);
        cfg.restarts = j.value("restarts", cfg.restarts);
        cfg.steps = j.value("steps", cfg.steps);
        cfg.lr = j.value("lr", cfg.lr);
      }
      cfg.validate();
      const auto G = load_generator(checkpoint);
      const Tensor X = read_samples_csv(input);
      if (X.rows() > 0 && X.cols() != G.arch.d_x)
        throw InvalidArgument("recover: samples have " + std::to_string(X.cols()) + " columns, generator emits " +
                              std::to_string(G.arch.d_x));
      const std::string csv = recovery_csv(recover_labels(X, G, cfg, recover_seed));
      if (output.empty()) {
        out << csv;
      } else {
        std::ofstream os(output);
        if (!os) throw InvalidArgument("cannot write " + output);
        os << csv;
      }
      return kExitOk;
    }
    if (*rep) {
      const auto files = glob_paths(pattern);
      if (files.empty()) {
        err << "report: no files match '" << pattern << "'\n";
        return kExitFailure;
      }
      std::vector<RunSummary> runs;
      for (const auto& f : files) runs.push_back(summarize_run(f));
      std::filesystem::create_directories(report_out);
      const std::filesystem::path dir = report_out;
      std::ofstream(dir / "summary.csv") << summary_csv(runs);
      std::ofstream(dir / "summary.svg") << render_svg(runs, metric);
      out << runs.size() << " runs summarized into " << (dir / "summary.csv").string() << " and "
          << (dir / "summary.svg").string() << "\n";
      return kExitOk;
    }
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace ncgl
