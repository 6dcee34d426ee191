#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dilatation/errors.hpp"

namespace dilatation::lab {

inline constexpr const char* kVersion = "0.1.0";

inline constexpr const char* kPass = "PASS";
inline constexpr const char* kFail = "FAIL";
inline constexpr const char* kFailAsExpected = "FAIL-AS-EXPECTED";

struct Row {
  std::string check_name;
  std::string instance;
  std::optional<double> epsilon;
  double residual = 0.0;
  double tolerance = 0.0;
  std::string verdict;
  std::optional<double> rate_estimate;
};

struct RunReport {
  std::string experiment;
  std::string instance;
  std::uint64_t seed = 0;
  bool expect_fail = false;
  nlohmann::json config;
  std::vector<Row> rows;
  std::vector<std::string> notes;  // error messages behind error rows

  int count(const std::string& verdict) const {
    int n = 0;
    for (const auto& r : rows) n += r.verdict == verdict ? 1 : 0;
    return n;
  }
  bool success() const { return count(kFail) == 0; }
};

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

// Quote a CSV field only when it needs it.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline constexpr const char* kCsvHeader = "check_name,instance,epsilon,residual,tolerance,verdict,rate_estimate";

inline std::string to_csv(const RunReport& rep) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : rep.rows) {
    out += csv_field(r.check_name) + "," + csv_field(r.instance) + "," + format_optional(r.epsilon) + "," +
           format_number(r.residual) + "," + format_number(r.tolerance) + "," + r.verdict + "," +
           format_optional(r.rate_estimate) + "\n";
  }
  return out;
}

// JSON has no inf/nan, so non-finite numbers go out as strings in the same %.17g form.
inline nlohmann::json json_number(double v) {
  if (!std::isfinite(v)) return format_number(v);
  return nlohmann::json::parse(format_number(v));
}

inline nlohmann::json json_optional(const std::optional<double>& v) {
  return v ? json_number(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json to_json(const RunReport& rep) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({{"check_name", r.check_name},
                    {"instance", r.instance},
                    {"epsilon", json_optional(r.epsilon)},
                    {"residual", json_number(r.residual)},
                    {"tolerance", json_number(r.tolerance)},
                    {"verdict", r.verdict},
                    {"rate_estimate", json_optional(r.rate_estimate)}});
  }
  return {{"version", kVersion},
          {"experiment", rep.experiment},
          {"instance", rep.instance},
          {"seed", rep.seed},
          {"config", rep.config},
          {"rows", rows},
          {"summary",
           {{"pass", rep.count(kPass)},
            {"fail", rep.count(kFail)},
            {"fail_as_expected", rep.count(kFailAsExpected)},
            {"total", rep.rows.size()},
            {"success", rep.success()}}}};
}

enum class Format { Csv, Json };

inline std::string render(const RunReport& rep, Format f) {
  return f == Format::Csv ? to_csv(rep) : to_json(rep).dump(2) + "\n";
}

/// Writes <dir>/<experiment>.csv or .json and returns the path.
inline std::filesystem::path emit_report(const RunReport& rep, const std::filesystem::path& dir, Format f) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  auto path = dir / (rep.experiment + (f == Format::Csv ? ".csv" : ".json"));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string());
  out << render(rep, f);
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
  return path;
}

}  // namespace dilatation::lab
