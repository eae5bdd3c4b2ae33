#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "spheregp/diagnostics.hpp"
#include "spheregp/errors.hpp"
#include "spheregp/fit.hpp"
#include "spheregp/geometry.hpp"
#include "spheregp/gp.hpp"
#include "spheregp/kernels.hpp"

namespace spheregp::io {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Logging to stderr, controlled by SPHEREGP_LOG = quiet | info | debug.

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("SPHEREGP_LOG");
    if (!env) return LogLevel::info;
    const std::string_view v(env);
    if (v == "quiet") return LogLevel::quiet;
    if (v == "debug") return LogLevel::debug;
    return LogLevel::info;
  }();
  return level;
}

inline void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::info) std::cerr << "[spheregp] " << msg << '\n';
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::debug) std::cerr << "[spheregp:debug] " << msg << '\n';
}

// ---------------------------------------------------------------------------
// Number formatting and parsing (locale independent).

/// Shortest form with at most `digits` significant digits.
inline std::string format_number(double v, int digits = 12) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, digits);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || text.empty()) {
    return std::nullopt;
  }
  return value;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                        : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << content;
  if (!out) throw DataError("failed writing '" + path + "'");
}

/// FNV-1a 64-bit over raw bytes, as 16 lowercase hex digits.
inline std::string content_hash(std::string_view bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Splits text into lines, dropping a trailing CR and the final empty line.
inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = end + 1;
  }
  return lines;
}

// ---------------------------------------------------------------------------
// Station CSV: station_id,lat_deg,lon_deg,value[,level]

struct StationRecord {
  std::string station_id;
  double lat_deg = 0.0;
  double lon_deg = 0.0;
  double value = 0.0;
  std::optional<std::string> level;
};

struct StationReadOptions {
  bool allow_nugget = false;
  /// Keep only rows with this level label.
  std::optional<std::string> level;
};

struct StationData {
  Dataset dataset;
  std::vector<StationRecord> records;
};

inline StationData parse_stations(const std::string& text, const std::string& source,
                                  const StationReadOptions& options = {}) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw DataError(source + ": empty file");
  const std::string& header = lines.front();
  bool has_level = false;
  if (header == "station_id,lat_deg,lon_deg,value,level") {
    has_level = true;
  } else if (header != "station_id,lat_deg,lon_deg,value") {
    throw DataError(source + ":1: expected header 'station_id,lat_deg,lon_deg,value[,level]'");
  }

  StationData out;
  out.dataset.name = source;
  std::set<std::pair<std::string, std::string>> seen_ids;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const std::string& line = lines[ln];
    const std::string where = source + ":" + std::to_string(ln + 1);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != (has_level ? 5u : 4u)) {
      throw DataError(where + ": expected " + std::to_string(has_level ? 5 : 4) + " fields, got " +
                      std::to_string(fields.size()));
    }
    StationRecord rec;
    rec.station_id = fields[0];
    if (rec.station_id.empty()) throw DataError(where + ": empty station_id");
    const auto lat = parse_double(fields[1]);
    const auto lon = parse_double(fields[2]);
    const auto val = parse_double(fields[3]);
    if (!lat || !lon || !val) throw DataError(where + ": malformed number");
    if (!std::isfinite(*val)) throw DataError(where + ": value is not finite");
    if (!(*lat >= -90.0 && *lat <= 90.0)) {
      throw DataError(where + ": lat_deg " + fields[1] + " outside [-90, 90]");
    }
    if (!(*lon >= -180.0 && *lon <= 180.0)) {
      throw DataError(where + ": lon_deg " + fields[2] + " outside [-180, 180]");
    }
    rec.lat_deg = *lat;
    rec.lon_deg = *lon;
    rec.value = *val;
    if (has_level) rec.level = fields[4];
    if (options.level && rec.level != options.level) continue;

    if (!seen_ids.emplace(rec.station_id, rec.level.value_or("")).second) {
      throw DataError(where + ": duplicate station '" + rec.station_id + "'" +
                      (rec.level ? " at level '" + *rec.level + "'" : std::string()));
    }
    const SpherePoint site = SpherePoint::from_degrees(rec.lon_deg, rec.lat_deg);
    if (!options.allow_nugget) {
      for (std::size_t k = 0; k < out.dataset.sites.size(); ++k) {
        if (out.dataset.sites[k] == site) {
          throw DataError(where + ": duplicate site (same coordinates as station '" +
                          out.records[k].station_id + "'); use --allow-nugget with tau2 > 0");
        }
      }
    }
    out.dataset.sites.push_back(site);
    out.dataset.values.push_back(rec.value);
    out.records.push_back(std::move(rec));
  }
  if (out.records.empty()) throw DataError(source + ": no data rows");
  return out;
}

inline StationData read_stations(const std::string& path, const StationReadOptions& options = {}) {
  return parse_stations(read_file(path), path, options);
}

inline std::string format_stations(const std::vector<StationRecord>& records) {
  bool has_level = false;
  for (const auto& r : records) has_level = has_level || r.level.has_value();
  std::string out = has_level ? "station_id,lat_deg,lon_deg,value,level\n"
                              : "station_id,lat_deg,lon_deg,value\n";
  for (const auto& r : records) {
    out += r.station_id + "," + format_number(r.lat_deg) + "," + format_number(r.lon_deg) + "," +
           format_number(r.value);
    if (has_level) out += "," + r.level.value_or("");
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prediction CSV: lon_deg,lat_deg,mean,variance

inline std::string format_predictions(std::span<const SpherePoint> targets,
                                      std::span<const PredictionResult> results) {
  if (targets.size() != results.size()) {
    throw DataError("write_predictions: targets and results differ in length");
  }
  std::string out = "lon_deg,lat_deg,mean,variance\n";
  for (std::size_t i = 0; i < targets.size(); ++i) {
    out += format_number(rad_to_deg(targets[i].lon())) + "," +
           format_number(rad_to_deg(targets[i].lat())) + "," + format_number(results[i].mean) +
           "," + format_number(results[i].variance) + "\n";
  }
  return out;
}

inline void write_predictions(const std::string& path, std::span<const SpherePoint> targets,
                              std::span<const PredictionResult> results) {
  write_file(path, format_predictions(targets, results));
}

/// Any CSV whose header names lon_deg and lat_deg columns.
inline std::vector<SpherePoint> parse_targets(const std::string& text, const std::string& source) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw DataError(source + ": empty file");
  const auto header = split_csv_line(lines.front());
  std::optional<std::size_t> lon_col, lat_col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "lon_deg") lon_col = i;
    if (header[i] == "lat_deg") lat_col = i;
  }
  if (!lon_col || !lat_col) throw DataError(source + ":1: header needs lon_deg and lat_deg columns");
  std::vector<SpherePoint> targets;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const std::string where = source + ":" + std::to_string(ln + 1);
    const auto fields = split_csv_line(lines[ln]);
    if (fields.size() != header.size()) throw DataError(where + ": wrong number of fields");
    const auto lon = parse_double(fields[*lon_col]);
    const auto lat = parse_double(fields[*lat_col]);
    if (!lon || !lat) throw DataError(where + ": malformed number");
    if (!(*lat >= -90.0 && *lat <= 90.0) || !(*lon >= -180.0 && *lon <= 180.0)) {
      throw DataError(where + ": coordinate out of range");
    }
    targets.push_back(SpherePoint::from_degrees(*lon, *lat));
  }
  return targets;
}

// ---------------------------------------------------------------------------
// Grid spec strings: regular:n_lat=3,n_lon=4 | reduced:n_lat=9,spacing_km=2000 |
// fibonacci:n_points=100

inline bool looks_like_grid_spec(std::string_view text) {
  return text.starts_with("regular:") || text.starts_with("reduced:") ||
         text.starts_with("fibonacci:");
}

inline GridSpec parse_grid_spec(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw DataError("grid spec '" + text + "' lacks a kind prefix");
  const std::string kind = text.substr(0, colon);
  std::map<std::string, double> kv;
  for (const auto& item : split_csv_line(std::string_view(text).substr(colon + 1))) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw DataError("grid spec item '" + item + "' is not key=value");
    const auto v = parse_double(std::string_view(item).substr(eq + 1));
    if (!v) throw DataError("grid spec item '" + item + "' has a malformed number");
    kv[item.substr(0, eq)] = *v;
  }
  auto take = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("grid spec '" + text + "' needs " + key);
    const double v = it->second;
    kv.erase(it);
    return v;
  };
  auto count = [&](const std::string& key) {
    const double v = take(key);
    if (v != std::floor(v) || v < 1 || v > 1e7) throw DataError("grid spec " + key + " must be a count >= 1");
    return static_cast<int>(v);
  };
  GridSpec spec;
  if (kind == "regular") {
    const int n_lat = count("n_lat");
    spec = GridSpec::regular(n_lat, count("n_lon"));
  } else if (kind == "reduced") {
    const int n_lat = count("n_lat");
    spec = GridSpec::reduced(n_lat, take("spacing_km"));
  } else if (kind == "fibonacci") {
    spec = GridSpec::fibonacci_points(count("n_points"));
  } else {
    throw DataError("unknown grid kind '" + kind + "'");
  }
  if (!kv.empty()) throw DataError("grid spec '" + text + "' has unknown key " + kv.begin()->first);
  return spec;
}

// ---------------------------------------------------------------------------
// JSON schemas

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json point_to_json(const SpherePoint& p) {
  return {{"lon_deg", rad_to_deg(p.lon())}, {"lat_deg", rad_to_deg(p.lat())}};
}

/// {"family": name, "params": {name: value, ...}, "children": [...]}
/// tau2 appears in the params of top-level specs only.
inline json kernel_to_json(const KernelSpec& spec, bool top_level = true) {
  json params = json::object();
  const auto names = KernelSpec::value_names(spec.family());
  for (std::size_t i = 0; i < names.size(); ++i) params[names[i]] = spec.value(i);
  if (top_level) params["tau2"] = spec.nugget();
  json children = json::array();
  for (const auto& child : spec.children()) children.push_back(kernel_to_json(child, false));
  return {{"family", std::string(family_name(spec.family()))}, {"params", params},
          {"children", children}};
}

inline KernelSpec kernel_from_json(const json& j, bool top_level = true) {
  try {
    if (!j.is_object()) throw DataError("kernel JSON must be an object");
    const auto family = family_from_name(j.at("family").get<std::string>());
    if (!family) throw DataError("unknown kernel family '" + j.at("family").get<std::string>() + "'");
    json params = j.contains("params") ? j.at("params") : json::object();
    if (!params.is_object()) throw DataError("kernel params must be an object");
    double tau2 = 0.0;
    if (params.contains("tau2")) {
      tau2 = params.at("tau2").get<double>();
      if (!top_level && tau2 != 0.0) throw DataError("child kernels cannot carry tau2");
      params.erase("tau2");
    }
    const json children = j.contains("children") ? j.at("children") : json::array();

    if (*family == Family::axisym_product) {
      if (!children.is_array() || children.size() != 2) {
        throw DataError("axisym_product needs exactly two children [isotropic, latitude]");
      }
      if (!params.empty()) throw DataError("axisym_product params hold only tau2");
      return KernelSpec::axisym_product(kernel_from_json(children[0], false),
                                        kernel_from_json(children[1], false), tau2);
    }
    if (!children.empty()) {
      throw DataError(std::string(family_name(*family)) + " takes no children");
    }
    const auto names = KernelSpec::value_names(*family);
    std::vector<double> values;
    for (const auto& name : names) {
      if (!params.contains(name)) {
        throw DataError(std::string(family_name(*family)) + " is missing parameter '" + name + "'");
      }
      values.push_back(params.at(name).get<double>());
      params.erase(name);
    }
    if (!params.empty()) {
      throw DataError("unknown parameter '" + params.begin().key() + "' for " +
                      std::string(family_name(*family)));
    }
    return KernelSpec::from_values(*family, values, tau2);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed kernel JSON: ") + e.what());
  }
}

inline json fit_config_to_json(const FitConfig& c) {
  return {{"max_iters", c.max_iters}, {"tol_f", c.tol_f},   {"n_restarts", c.n_restarts},
          {"seed", c.seed},           {"tol_x", c.tol_x},
          {"fixed_params", std::vector<std::string>(c.fixed_params.begin(), c.fixed_params.end())}};
}

inline FitConfig fit_config_from_json(const json& j) {
  FitConfig c;
  try {
    if (!j.is_object()) throw DataError("fit config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (key == "max_iters") c.max_iters = value.get<int>();
      else if (key == "tol_f") c.tol_f = value.get<double>();
      else if (key == "n_restarts") c.n_restarts = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "tol_x") c.tol_x = value.get<double>();
      else if (key == "fixed_params") {
        for (const auto& name : value) c.fixed_params.insert(name.get<std::string>());
      } else {
        throw DataError("unknown fit config field '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed fit config: ") + e.what());
  }
  c.validate();
  return c;
}

inline json named_params(const KernelSpec& spec, std::span<const double> values) {
  json out = json::object();
  const auto names = param_names(spec);
  for (std::size_t i = 0; i < names.size() && i < values.size(); ++i) out[names[i]] = values[i];
  return out;
}

inline json fit_result_to_json(const FitResult& r) {
  json trace = json::array();
  for (auto [it, v] : r.trace) trace.push_back({it, number_or_null(v)});
  json restarts = json::array();
  for (const auto& s : r.restart_results) {
    restarts.push_back({{"index", s.index},
                        {"log_likelihood", number_or_null(s.log_likelihood)},
                        {"n_evals", s.n_evals},
                        {"iterations", s.iterations},
                        {"converged", s.converged},
                        {"params", named_params(r.best_spec, s.params)}});
  }
  return {{"best_spec", kernel_to_json(r.best_spec)},
          {"log_likelihood", r.log_likelihood},
          {"n_evals", r.n_evals},
          {"converged", r.converged},
          {"n_free_params", r.n_free_params},
          {"data_fingerprint", hex64(r.data_fingerprint)},
          {"trace", trace},
          {"restart_results", restarts}};
}

inline json comparison_to_json(std::span<const ComparisonRow> rows) {
  json out = json::array();
  for (const auto& row : rows) {
    out.push_back({{"model", row.model},
                   {"log_likelihood", row.log_likelihood},
                   {"n_params", row.n_params},
                   {"aic", row.aic}});
  }
  return out;
}

inline json report_to_json(const DiagnosticReport& r) {
  json details = json::array();
  for (const auto& w : r.details) {
    details.push_back({{"x", point_to_json(w.x)},
                       {"y", point_to_json(w.y)},
                       {"value_a", number_or_null(w.value_a)},
                       {"value_b", number_or_null(w.value_b)}});
  }
  return {{"check_name", r.check_name}, {"passed", r.passed},
          {"statistic", number_or_null(r.statistic)}, {"threshold", r.threshold},
          {"rule", r.rule}, {"details", details}};
}

inline json pole_probe_to_json(std::span<const PoleProbeRow> rows) {
  json out = json::array();
  for (const auto& row : rows) {
    json entry = {{"epsilon", row.epsilon}, {"undefined_at_pole", row.undefined_at_pole}};
    entry["spread"] = row.undefined_at_pole ? json("undefined at pole") : number_or_null(row.spread);
    entry["pole_gap"] = row.pole_gap ? json(*row.pole_gap) : json(nullptr);
    out.push_back(entry);
  }
  return out;
}

inline json cross_validation_to_json(const CrossValidationResult& cv) {
  json rows = json::array();
  for (const auto& row : cv.rows) {
    json records = json::array();
    for (const auto& rec : row.records) {
      records.push_back({{"index", rec.index}, {"fold", rec.fold}, {"observed", rec.observed},
                         {"mean", rec.mean}, {"variance", rec.variance}});
    }
    rows.push_back({{"model", row.model},
                    {"status", row.failed ? "failed" : "ok"},
                    {"error", row.error},
                    {"rmse", number_or_null(row.rmse)},
                    {"mean_log_score", number_or_null(row.mean_log_score)},
                    {"mean_crps", number_or_null(row.mean_crps)},
                    {"records", records}});
  }
  return {{"folds", cv.fold_of}, {"scorecard", rows}};
}

inline json covariogram_to_json(std::span<const CovariogramRow> rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"band", r.band}, {"lon_bin", r.lon_bin}, {"lat_bin", r.lat_bin},
                   {"lon_lag_lo", r.lon_lag_lo}, {"lat_lag_lo", r.lat_lag_lo},
                   {"covariance", number_or_null(r.covariance)}, {"pair_count", r.pair_count}});
  }
  return out;
}

/// Fixed-width plain-text table for terminal display.
inline std::string format_report_table(std::span<const DiagnosticReport> reports) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-28s %-6s %14s %12s\n", "check", "pass", "statistic", "threshold");
  out += line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof(line), "%-28s %-6s %14.6g %12.3g\n", r.check_name.c_str(),
                  r.passed ? "yes" : "no", r.statistic, r.threshold);
    out += line;
  }
  return out;
}

inline json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(source + ": invalid JSON: " + e.what());
  }
}

inline json read_json(const std::string& path) { return parse_json(read_file(path), path); }

inline void write_json(const std::string& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

}  // namespace spheregp::io
