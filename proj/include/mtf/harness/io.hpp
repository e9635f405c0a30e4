#pragma once

// Output writers: CSV traces, JSON summaries with a versioned schema and its validator.
// Everything written is a function of the inputs only (no timestamps or host data).

#include "mtf/core.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <fstream>

namespace mtf::harness {

inline constexpr const char* kSummarySchema = "mtf-summary/1";

/// Shortest round-trip text of a double ("%.17g"), independent of the stream locale.
inline std::string exact(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Compact text of a double for labels and messages.
inline std::string fmt(double x, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

/// Column-oriented numeric trace.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void add(std::vector<double> row) {
    if (row.size() != columns.size()) throw DomainError("csv: row width does not match the header");
    rows.push_back(std::move(row));
  }

  [[nodiscard]] std::vector<double> column(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw DomainError("csv: no column " + name);
    const auto k = static_cast<std::size_t>(it - columns.begin());
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[k]);
    return out;
  }

  void write(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
    os << '\n';
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << exact(r[i]);
      os << '\n';
    }
  }

  static CsvTable read(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot read " + path);
    CsvTable t;
    std::string line;
    if (!std::getline(is, line)) throw DomainError("csv: " + path + " is empty");
    std::stringstream header(line);
    for (std::string c; std::getline(header, c, ',');) t.columns.push_back(c);
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::vector<double> row;
      std::stringstream ls(line);
      for (std::string c; std::getline(ls, c, ',');) {
        try {
          row.push_back(std::stod(c));
        } catch (const std::exception&) {
          throw DomainError("csv: " + path + " has a non-numeric entry '" + c + "'");
        }
      }
      t.add(std::move(row));
    }
    return t;
  }
};

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path);
  return nlohmann::json::parse(is);
}

/// Problems found in a summary document; empty when it conforms to the current schema.
///   { schema: "mtf-summary/1", scenario: string, kind: quasi-static|dynamic|coupled|ep,
///     config: object, files: [string],
///     runs: [ { label: string, parameters: object, results: object } ] }
/// Numeric arrays inside results must hold numbers only.
inline std::vector<std::string> summary_problems(const nlohmann::json& s) {
  std::vector<std::string> out;
  const auto need = [&](const char* key, auto pred, const char* what) {
    if (!s.contains(key) || !pred(s[key])) out.push_back(std::string("/") + key + " must be " + what);
  };
  if (!s.is_object()) return {"summary must be an object"};
  need("schema", [](const auto& v) { return v.is_string() && v.template get<std::string>() == kSummarySchema; },
       "\"mtf-summary/1\"");
  need("scenario", [](const auto& v) { return v.is_string(); }, "a string");
  need("kind",
       [](const auto& v) {
         if (!v.is_string()) return false;
         const auto k = v.template get<std::string>();
         return k == "quasi-static" || k == "dynamic" || k == "coupled" || k == "ep";
       },
       "a scenario kind");
  need("config", [](const auto& v) { return v.is_object(); }, "an object");
  need("files",
       [](const auto& v) {
         return v.is_array() && std::all_of(v.begin(), v.end(), [](const auto& f) { return f.is_string(); });
       },
       "an array of file names");
  need("runs", [](const auto& v) { return v.is_array() && !v.empty(); }, "a nonempty array");
  if (s.contains("runs") && s["runs"].is_array()) {
    for (std::size_t i = 0; i < s["runs"].size(); ++i) {
      const auto& r = s["runs"][i];
      const std::string p = "/runs/" + std::to_string(i);
      if (!r.is_object()) {
        out.push_back(p + " must be an object");
        continue;
      }
      if (!r.contains("label") || !r["label"].is_string()) out.push_back(p + "/label must be a string");
      if (!r.contains("parameters") || !r["parameters"].is_object()) out.push_back(p + "/parameters must be an object");
      if (!r.contains("results") || !r["results"].is_object()) {
        out.push_back(p + "/results must be an object");
        continue;
      }
      for (const auto& [k, v] : r["results"].items())
        if (v.is_array() && !std::all_of(v.begin(), v.end(), [](const auto& x) { return x.is_number(); }))
          out.push_back(p + "/results/" + k + " must hold numbers only");
    }
  }
  return out;
}

inline bool valid_summary(const nlohmann::json& s) { return summary_problems(s).empty(); }

/// Output directory: @p override if given, else $MTF_OUTPUT_DIR/<name>, else the configured one.
inline std::filesystem::path resolve_output_dir(const std::string& configured, const std::string& name,
                                                const std::string& override_dir = {}) {
  if (!override_dir.empty()) return override_dir;
  if (const char* env = std::getenv("MTF_OUTPUT_DIR"); env && *env) return std::filesystem::path(env) / name;
  return configured;
}

}  // namespace mtf::harness
