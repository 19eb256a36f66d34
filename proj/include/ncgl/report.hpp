#pragma once

// Aggregation of per-run metric logs into a summary table and an SVG chart of
// a metric against the noise level, one series per variant.

#include <glob.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ncgl/error.hpp"
#include "ncgl/manifest.hpp"
#include "ncgl/training.hpp"

namespace ncgl {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_metric(const std::string& s, const std::string& where) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw FormatError(where + ": trailing characters in '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw FormatError(where + ": not a number '" + s + "'");
  }
}

/// Inverse of metrics_csv.
inline std::vector<MetricRow> parse_metrics_csv(const std::string& text, const std::string& source = "metrics") {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || split_csv_line(line) != split_csv_line("epoch,variant,loss_d,loss_g,gen_label_acc,m_error"))
    throw FormatError(source + ": unexpected header");
  std::vector<MetricRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    const std::string where = source + ":" + std::to_string(lineno);
    if (f.size() != 6) throw FormatError(where + ": expected 6 fields");
    MetricRow r;
    r.epoch = static_cast<std::size_t>(parse_metric(f[0], where));
    r.variant = f[1];
    r.loss_d = parse_metric(f[2], where);
    r.loss_g = parse_metric(f[3], where);
    r.gen_label_acc = parse_metric(f[4], where);
    r.m_error = parse_metric(f[5], where);
    rows.push_back(std::move(r));
  }
  return rows;
}

struct RunSummary {
  std::string source;
  std::string variant;
  std::optional<double> noise_level;  // from a sibling manifest.json
  MetricRow last;
};

inline RunSummary summarize_run(const std::filesystem::path& csv) {
  std::ifstream is(csv);
  if (!is) throw InvalidArgument("cannot open " + csv.string());
  std::stringstream ss;
  ss << is.rdbuf();
  const auto rows = parse_metrics_csv(ss.str(), csv.string());
  if (rows.empty()) throw FormatError(csv.string() + ": no epochs logged");
  RunSummary s{csv.string(), rows.back().variant, std::nullopt, rows.back()};
  const auto manifest = csv.parent_path() / "manifest.json";
  if (std::filesystem::exists(manifest)) s.noise_level = load_manifest(manifest).noise_level;
  return s;
}

inline std::string summary_csv(const std::vector<RunSummary>& runs) {
  std::string out = "source,variant,noise_level,epochs,loss_d,loss_g,gen_label_acc,m_error\n";
  for (const auto& r : runs)
    out += r.source + "," + r.variant + "," + (r.noise_level ? format_metric(*r.noise_level) : "") + "," +
           std::to_string(r.last.epoch) + "," + format_metric(r.last.loss_d) + "," + format_metric(r.last.loss_g) + "," +
           format_metric(r.last.gen_label_acc) + "," + format_metric(r.last.m_error) + "\n";
  return out;
}

/// Sorted matches of a shell glob; no match yields an empty list.
inline std::vector<std::string> glob_paths(const std::string& pattern) {
  glob_t g{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  std::vector<std::string> out;
  if (rc == 0)
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  globfree(&g);
  if (rc != 0 && rc != GLOB_NOMATCH) throw InvalidArgument("glob failed for '" + pattern + "'");
  std::sort(out.begin(), out.end());
  return out;
}

struct SeriesPoint {
  double noise = 0.0;
  double value = 0.0;
  std::size_t runs = 0;
};

/// Per-variant mean of a metric at each noise level; runs without a noise level
/// or with a missing metric are skipped.
inline std::map<std::string, std::vector<SeriesPoint>> series_by_variant(const std::vector<RunSummary>& runs,
                                                                        const std::string& metric) {
  std::map<std::string, std::map<double, SeriesPoint>> acc;
  for (const auto& r : runs) {
    if (!r.noise_level) continue;
    double v;
    if (metric == "gen_label_acc")
      v = r.last.gen_label_acc;
    else if (metric == "m_error")
      v = r.last.m_error;
    else if (metric == "loss_d")
      v = r.last.loss_d;
    else if (metric == "loss_g")
      v = r.last.loss_g;
    else
      throw InvalidArgument("unknown metric '" + metric + "'");
    if (std::isnan(v)) continue;
    auto& p = acc[r.variant][*r.noise_level];
    p.noise = *r.noise_level;
    p.value += v;
    ++p.runs;
  }
  std::map<std::string, std::vector<SeriesPoint>> out;
  for (auto& [variant, pts] : acc)
    for (auto& [noise, p] : pts) out[variant].push_back({noise, p.value / static_cast<double>(p.runs), p.runs});
  return out;
}

inline std::string render_svg(const std::vector<RunSummary>& runs, const std::string& metric = "gen_label_acc") {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};
  const auto series = series_by_variant(runs, metric);
  constexpr double W = 640, H = 420, L = 70, R = 170, T = 30, Bm = 60;
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  bool first = true;
  for (const auto& [_, pts] : series)
    for (const auto& p : pts) {
      if (first) {
        x0 = x1 = p.noise;
        y0 = y1 = p.value;
        first = false;
      }
      x0 = std::min(x0, p.noise);
      x1 = std::max(x1, p.noise);
      y0 = std::min(y0, p.value);
      y1 = std::max(y1, p.value);
    }
  if (metric == "gen_label_acc") y0 = std::min(y0, 0.0), y1 = std::max(y1, 1.0);
  if (x1 - x0 < 1e-12) x0 -= 0.05, x1 += 0.05;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  const auto py = [&](double y) { return H - Bm - (y - y0) / (y1 - y0) * (H - T - Bm); };
  const auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return std::string(buf);
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - Bm << "\" x2=\"" << W - R << "\" y2=\"" << H - Bm
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - Bm << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    os << "<text x=\"" << px(xv) << "\" y=\"" << H - Bm + 18 << "\" text-anchor=\"middle\">" << num(xv) << "</text>\n";
    os << "<text x=\"" << L - 8 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << num(yv) << "</text>\n";
    os << "<line x1=\"" << L << "\" y1=\"" << py(yv) << "\" x2=\"" << W - R << "\" y2=\"" << py(yv)
       << "\" stroke=\"#ddd\"/>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">noise level</text>\n";
  os << "<text x=\"18\" y=\"" << (T + H - Bm) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << (T + H - Bm) / 2 << ")\">" << metric << "</text>\n";

  std::size_t k = 0;
  for (const auto& [variant, pts] : series) {
    const char* color = kColors[k % std::size(kColors)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : pts) os << px(p.noise) << "," << py(p.value) << " ";
    os << "\"/>\n";
    for (const auto& p : pts)
      os << "<circle cx=\"" << px(p.noise) << "\" cy=\"" << py(p.value) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    const double ly = T + 10 + 20.0 * static_cast<double>(k);
    os << "<line x1=\"" << W - R + 15 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 35 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << W - R + 40 << "\" y=\"" << ly + 4 << "\">" << variant << "</text>\n";
    ++k;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace ncgl
