#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ncgl/cli.hpp"

using namespace ncgl;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "ncgl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("ncgl_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

nlohmann::json tiny_run(const std::string& variant, double pi) {
  nlohmann::json j = {
      {"experiment",
       {{"variant", variant}, {"epochs", 2}, {"batch", 32}, {"gen_hidden", {8}}, {"disc_hidden", {8}}, {"d_V", 4},
        {"d_v", 4}, {"seed", 3}}},
      {"data", {{"kind", "mixture"}, {"mixture", {{"n_per_class", 60}}}}},
      {"noise", {{"pi", pi}}},
      {"evaluation", {{"samples", 200}, {"classifier_epochs", 2}}}};
  if (variant != "RCGAN_U" && variant != "Biased") j["channel"] = "noise";
  return j;
}

void write_json(const fs::path& p, const nlohmann::json& j) { std::ofstream(p) << j.dump(2); }

}  // namespace

TEST(Cli, VerifyPasses) {
  const auto r = run({"verify", "--instances", "200", "--seed", "7", "--channels", "10"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("thm1.tv"), std::string::npos);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"verify", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"train"}).code, kExitUsage);
  EXPECT_EQ(run({"verify", "--instances", "zero"}).code, kExitUsage);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST(Cli, RcganUWithChannelRejected) {
  const auto dir = scratch("rcganu");
  auto j = tiny_run("RCGAN_U", 0.7);
  j["channel"] = "noise";
  write_json(dir / "run.json", j);
  const auto r = run({"train", "--config", (dir / "run.json").string(), "--out", (dir / "out").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("RCGAN_U"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "out"));
  fs::remove_all(dir);
}

TEST(Cli, MissingChannelRejected) {
  const auto dir = scratch("nochannel");
  auto j = tiny_run("RCGAN", 0.7);
  j.erase("channel");
  write_json(dir / "run.json", j);
  EXPECT_EQ(run({"train", "--config", (dir / "run.json").string()}).code, kExitUsage);
  j["channel"] = "noise";
  j["extra"] = 1;
  write_json(dir / "run.json", j);
  EXPECT_EQ(run({"train", "--config", (dir / "run.json").string()}).code, kExitUsage);
  fs::remove_all(dir);
}

TEST(Cli, TrainReplayRecoverReport) {
  const auto dir = scratch("pipeline");
  write_json(dir / "run.json", tiny_run("RCGAN", 0.8));
  const auto a = run({"train", "--config", (dir / "run.json").string(), "--out", (dir / "a").string()});
  ASSERT_EQ(a.code, kExitOk) << a.err;
  for (const char* f : {"model.ncgl", "metrics.csv", "config.json", "manifest.json", "eval.json"})
    EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;

  const auto manifest = load_manifest(dir / "a" / "manifest.json");
  EXPECT_EQ(manifest.seed, 3u);
  EXPECT_NEAR(manifest.noise_level, 0.2, 1e-12);
  EXPECT_EQ(manifest.artifacts.at("metrics"), "metrics.csv");

  const auto b = run({"train", "--config", (dir / "a" / "manifest.json").string(), "--out", (dir / "b").string()});
  ASSERT_EQ(b.code, kExitOk) << b.err;
  EXPECT_EQ(slurp(dir / "a" / "metrics.csv"), slurp(dir / "b" / "metrics.csv"));
  EXPECT_EQ(load_manifest(dir / "b" / "manifest.json").config_hash, manifest.config_hash);

  const auto c = run({"train", "--config", (dir / "run.json").string(), "--seed", "4", "--out", (dir / "c").string()});
  ASSERT_EQ(c.code, kExitOk) << c.err;
  EXPECT_NE(load_manifest(dir / "c" / "manifest.json").config_hash, manifest.config_hash);

  std::ofstream(dir / "samples.csv") << "x0,x1\n1,0\n-0.5,0.866\n-0.5,-0.866\n";
  const auto rec = run({"recover", "--checkpoint", (dir / "a").string(), "--input", (dir / "samples.csv").string(),
                        "--output", (dir / "labels.csv").string(), "--seed", "1"});
  ASSERT_EQ(rec.code, kExitOk) << rec.err;
  std::istringstream lines(slurp(dir / "labels.csv"));
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "index,label,residual_0,residual_1,residual_2");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, 3);
  std::ofstream(dir / "wide.csv") << "1,2,3\n";
  EXPECT_EQ(run({"recover", "--checkpoint", (dir / "a").string(), "--input", (dir / "wide.csv").string()}).code,
            kExitUsage);

  const auto rep = run({"report", "--glob", (dir / "*" / "metrics.csv").string(), "--out", (dir / "rep").string()});
  ASSERT_EQ(rep.code, kExitOk) << rep.err;
  const auto summary = slurp(dir / "rep" / "summary.csv");
  EXPECT_EQ(std::count(summary.begin(), summary.end(), '\n'), 4);
  const auto svg = slurp(dir / "rep" / "summary.svg");
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("RCGAN"), std::string::npos);
  EXPECT_EQ(run({"report", "--glob", (dir / "nothing*.csv").string()}).code, kExitFailure);
  fs::remove_all(dir);
}

TEST(Manifest, HashIgnoresKeyOrder) {
  const auto a = nlohmann::json::parse(R"({"b": {"y": 1, "x": [1, 2]}, "a": 0.5})");
  const auto b = nlohmann::json::parse(R"({"a": 0.5, "b": {"x": [1, 2], "y": 1}})");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(nlohmann::json::parse(R"({"a": 0.5})")));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Manifest, RoundTrip) {
  const auto dir = scratch("manifest");
  auto m = RunManifest::begin({{"k", 1}}, 42);
  m.artifacts["model"] = "model.ncgl";
  m.noise_level = 0.3;
  m.finish();
  save_manifest(m, dir / "manifest.json");
  const auto back = load_manifest(dir / "manifest.json");
  EXPECT_EQ(back.config_hash, m.config_hash);
  EXPECT_EQ(back.seed, 42u);
  EXPECT_EQ(back.started_at, m.started_at);
  EXPECT_EQ(back.artifacts, m.artifacts);
  EXPECT_EQ(back.started_at.size(), 20u);
  fs::remove_all(dir);
}

TEST(Report, MetricsCsvRoundTripAndSeries) {
  MetricRow r{4, "Biased", 1.5, -0.5, 0.75, std::numeric_limits<double>::quiet_NaN()};
  const auto rows = parse_metrics_csv(metrics_csv({r}));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].epoch, 4u);
  EXPECT_EQ(rows[0].loss_g, -0.5);
  EXPECT_TRUE(std::isnan(rows[0].m_error));
  EXPECT_THROW(parse_metrics_csv("a,b\n"), FormatError);
  EXPECT_THROW(parse_metrics_csv("epoch,variant,loss_d,loss_g,gen_label_acc,m_error\n1,X,abc,0,0,\n"), FormatError);

  std::vector<RunSummary> runs{{"a", "RCGAN", 0.3, r}, {"b", "RCGAN", 0.3, r}, {"c", "Biased", 0.1, r}};
  runs[1].last.gen_label_acc = 0.25;
  const auto series = series_by_variant(runs, "gen_label_acc");
  ASSERT_EQ(series.at("RCGAN").size(), 1u);
  EXPECT_EQ(series.at("RCGAN")[0].value, 0.5);
  EXPECT_EQ(series.at("RCGAN")[0].runs, 2u);
  EXPECT_THROW(series_by_variant(runs, "fid"), InvalidArgument);
}
