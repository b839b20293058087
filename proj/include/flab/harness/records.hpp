#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "flab/core/error.hpp"
#include "flab/core/files.hpp"
#include "flab/metrics/metrics.hpp"

namespace flab::harness {

inline constexpr std::string_view kMetricsHeader = "exposure,seed,metric,scope,value";
inline constexpr std::string_view kFigureHeader = "x,series,mean,stderr";

/// One tidy metric value. scope is "overall", "class:<id>" or "analysis:<tool>".
struct MetricRecord {
  int exposure = 0;
  std::uint64_t seed = 0;
  std::string metric;
  std::string scope;
  double value = 0;

  bool operator==(const MetricRecord&) const = default;
};

inline std::string format_value(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string class_scope(int c) { return "class:" + std::to_string(c); }

/// Ordering key for scopes: overall, then classes by numeric id, then analysis tools by name.
inline std::tuple<int, long, std::string> scope_key(const std::string& scope) {
  if (scope == "overall") return {0, 0, ""};
  if (scope.rfind("class:", 0) == 0) return {1, std::stol(scope.substr(6)), ""};
  return {2, 0, scope};
}

inline bool valid_scope(const std::string& scope) {
  if (scope == "overall") return true;
  if (scope.rfind("class:", 0) == 0) {
    const auto id = scope.substr(6);
    return !id.empty() && id.find_first_not_of("0123456789") == std::string::npos;
  }
  return scope.rfind("analysis:", 0) == 0 && scope.size() > 9;
}

inline std::vector<MetricRecord> curve_records(const metrics::CurvePoint& p, std::uint64_t seed) {
  std::vector<MetricRecord> out{{p.exposure, seed, p.metric, "overall", p.overall}};
  for (const auto& [c, v] : p.per_class) out.push_back({p.exposure, seed, p.metric, class_scope(c), v});
  return out;
}

/// Header plus rows sorted stably by (exposure, scope); LF endings, 9 significant digits.
inline std::string metrics_csv(std::vector<MetricRecord> records) {
  if (records.empty()) throw UsageError("write_metrics_csv: no records");
  std::stable_sort(records.begin(), records.end(), [](const MetricRecord& a, const MetricRecord& b) {
    return std::make_tuple(a.exposure, scope_key(a.scope)) < std::make_tuple(b.exposure, scope_key(b.scope));
  });
  std::string out(kMetricsHeader);
  out += "\n";
  for (const auto& r : records) {
    if (r.metric.find_first_of(",\n") != std::string::npos || !valid_scope(r.scope))
      throw UsageError("metric record has an invalid metric or scope: " + r.metric + " / " + r.scope);
    out += std::to_string(r.exposure) + "," + std::to_string(r.seed) + "," + r.metric + "," + r.scope + "," +
           format_value(r.value) + "\n";
  }
  return out;
}

inline void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRecord>& records) {
  files::write_atomic(path, metrics_csv(records));
}

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  if (!line.empty() && line.back() == ',') f.emplace_back();
  return f;
}

inline double parse_double(const std::string& s, const std::string& where) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return HUGE_VAL;
  if (s == "-inf") return -HUGE_VAL;
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ConfigError(where + ": \"" + s + "\" is not a number");
  return v;
}

inline long parse_int(const std::string& s, const std::string& where) {
  if (s.empty() || s.find_first_not_of("-0123456789") != std::string::npos)
    throw ConfigError(where + ": \"" + s + "\" is not an integer");
  return std::stol(s);
}

}  // namespace detail

/// Parses a metrics CSV; malformed input reports the 1-based line number.
inline std::vector<MetricRecord> parse_metrics_csv(const std::string& text, const std::string& name = "metrics.csv") {
  std::vector<MetricRecord> out;
  std::stringstream ss(text);
  std::string line;
  int n = 0;
  while (std::getline(ss, line)) {
    ++n;
    const std::string where = name + ":" + std::to_string(n);
    if (n == 1) {
      if (line != kMetricsHeader) throw ConfigError(where + ": expected header \"" + std::string(kMetricsHeader) + "\"");
      continue;
    }
    const auto f = detail::split_fields(line);
    if (f.size() != 5) throw ConfigError(where + ": expected 5 fields, got " + std::to_string(f.size()));
    MetricRecord r{int(detail::parse_int(f[0], where)), std::uint64_t(detail::parse_int(f[1], where)), f[2], f[3],
                   detail::parse_double(f[4], where)};
    if (!valid_scope(r.scope)) throw ConfigError(where + ": invalid scope \"" + r.scope + "\"");
    out.push_back(std::move(r));
  }
  if (n == 0) throw ConfigError(name + ":1: empty file");
  return out;
}

inline std::vector<MetricRecord> read_metrics_csv(const std::filesystem::path& path) {
  return parse_metrics_csv(files::read_all(path), path.string());
}

struct SeriesStats {
  double mean = 0;
  double stderr_ = 0;  // s / sqrt(n); 0 for a single value
  std::size_t n = 0;
};

/// Sample mean and standard error s/sqrt(n), skipping NaN values.
inline SeriesStats summarize(std::span<const double> values) {
  SeriesStats s;
  std::vector<double> v;
  for (double x : values)
    if (!std::isnan(x)) v.push_back(x);
  s.n = v.size();
  if (v.empty()) {
    s.mean = std::nan("");
    return s;
  }
  for (double x : v) s.mean += x / double(v.size());
  if (v.size() > 1) {
    double ss = 0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.stderr_ = std::sqrt(ss / double(v.size() - 1)) / std::sqrt(double(v.size()));
  }
  return s;
}

/// Mean over seeds per (exposure, metric, scope).
inline std::string mean_curve_csv(const std::vector<MetricRecord>& records) {
  std::map<std::tuple<int, std::string, std::tuple<int, long, std::string>, std::string>, std::vector<double>> groups;
  for (const auto& r : records) groups[{r.exposure, r.metric, scope_key(r.scope), r.scope}].push_back(r.value);
  std::string out = "exposure,metric,scope,mean,stderr,n\n";
  for (const auto& [k, v] : groups) {
    const auto s = summarize(v);
    out += std::to_string(std::get<0>(k)) + "," + std::get<1>(k) + "," + std::get<3>(k) + "," + format_value(s.mean) +
           "," + format_value(s.stderr_) + "," + std::to_string(s.n) + "\n";
  }
  return out;
}

struct FigureRow {
  int x = 0;
  std::string series;
  double mean = 0;
  double stderr_ = 0;
};

inline std::string figure_csv(const std::vector<FigureRow>& rows) {
  std::string out(kFigureHeader);
  out += "\n";
  for (const auto& r : rows)
    out += std::to_string(r.x) + "," + r.series + "," + format_value(r.mean) + "," + format_value(r.stderr_) + "\n";
  return out;
}

/// Parses a tidy figure CSV; malformed input reports the 1-based line number.
inline std::vector<FigureRow> parse_figure_csv(const std::string& text, const std::string& name = "figure.csv") {
  std::vector<FigureRow> out;
  std::stringstream ss(text);
  std::string line;
  int n = 0;
  while (std::getline(ss, line)) {
    ++n;
    const std::string where = name + ":" + std::to_string(n);
    if (n == 1) {
      if (line != kFigureHeader) throw ConfigError(where + ": expected header \"" + std::string(kFigureHeader) + "\"");
      continue;
    }
    const auto f = detail::split_fields(line);
    if (f.size() != 4) throw ConfigError(where + ": expected 4 fields, got " + std::to_string(f.size()));
    out.push_back({int(detail::parse_int(f[0], where)), f[1], detail::parse_double(f[2], where),
                   detail::parse_double(f[3], where)});
  }
  if (n == 0) throw ConfigError(name + ":1: empty file");
  return out;
}

}  // namespace flab::harness
