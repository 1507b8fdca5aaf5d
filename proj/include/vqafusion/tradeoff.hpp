#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vqafusion/complexity.hpp"

namespace vqaf {

// ---------------------------------------------------------------------------
// plain CSV: '#' comment lines, no quoting (the schemas here never embed
// commas), LF endings, '.' decimal separator
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_csv_line(line);
    if (table.header.empty()) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size())
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(table.header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(lineno);
  }
  if (table.header.empty())
    throw ParseError(path + ": no header row found");
  return table;
}

inline double parse_double_field(const std::string& s, const std::string& ctx) {
  double v = 0;
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end)
    throw ParseError(ctx + ": not a number: '" + s + "'");
  return v;
}

inline std::uint64_t parse_u64_field(const std::string& s,
                                     const std::string& ctx) {
  std::uint64_t v = 0;
  const char* begin = s.data();
  const char* end = begin + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end)
    throw ParseError(ctx + ": not a count: '" + s + "'");
  return v;
}

// shortest round-trip decimal form
inline std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// accuracy fixtures
// ---------------------------------------------------------------------------

struct FixtureRow {
  std::string dataset, feature, feature_kind, fusion, attention;
  double accuracy = 0;  // percentage, [0, 100]

  std::string key() const {
    return feature + "/" + feature_kind + "/" + fusion + "/" + attention;
  }
};

struct AccuracyFixture {
  std::vector<FixtureRow> rows;
};

inline AccuracyFixture parse_fixture_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  const std::vector<std::string> expected = {
      "dataset", "feature", "feature_kind", "fusion", "attention", "accuracy"};
  if (table.header != expected)
    throw ParseError(path + ": fixture header must be "
                     "dataset,feature,feature_kind,fusion,attention,accuracy");
  AccuracyFixture fx;
  std::map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& f = table.rows[i];
    const std::string ctx = path + ":" + std::to_string(table.line_numbers[i]);
    FixtureRow row{f[0], f[1], f[2], f[3], f[4],
                   parse_double_field(f[5], ctx)};
    if (row.accuracy < 0.0 || row.accuracy > 100.0)
      throw ValidationError(ctx + ": accuracy " + fmt_double(row.accuracy) +
                            " outside [0, 100]");
    const std::string unique = row.dataset + "/" + row.key();
    auto [it, inserted] = seen.emplace(unique, table.line_numbers[i]);
    if (!inserted)
      throw ValidationError(ctx + ": duplicate key '" + unique +
                            "' (first at line " + std::to_string(it->second) +
                            ")");
    fx.rows.push_back(std::move(row));
  }
  return fx;
}

// ---------------------------------------------------------------------------
// join
// ---------------------------------------------------------------------------

enum class ComplexityAxis { Params, Flops };

inline std::string axis_name(ComplexityAxis a) {
  return a == ComplexityAxis::Params ? "params" : "flops";
}

inline ComplexityAxis parse_axis(const std::string& s) {
  if (s == "params") return ComplexityAxis::Params;
  if (s == "flops") return ComplexityAxis::Flops;
  throw ConfigError("unknown axis '" + s + "' (valid: params, flops)");
}

struct TradeoffPoint {
  std::string config_key;
  ComplexityReport report;
  double accuracy = 0;         // percentage from the fixture
  std::uint64_t complexity = 0;  // measured + offset along the chosen axis
};

struct JoinResult {
  std::vector<TradeoffPoint> points;
  std::vector<std::string> unmatched_reports;  // config ids with no fixture
  std::vector<std::string> unmatched_fixture;  // fixture keys with no report
};

// Inner join on (feature, feature_kind, fusion, attention). Unmatched rows
// on either side are reported, never dropped silently.
inline JoinResult join_tradeoff(const std::vector<ComplexityReport>& reports,
                                const AccuracyFixture& fixture,
                                ComplexityAxis axis) {
  std::map<std::string, std::vector<const FixtureRow*>> by_key;
  for (const auto& row : fixture.rows) by_key[row.key()].push_back(&row);

  JoinResult out;
  std::map<std::string, bool> fixture_used;
  for (const auto& row : fixture.rows) fixture_used[row.key()] = false;

  for (const auto& rep : reports) {
    const std::string key = rep.feature + "/" + rep.feature_kind + "/" +
                            rep.fusion + "/" + rep.attention;
    auto it = by_key.find(key);
    if (it == by_key.end()) {
      out.unmatched_reports.push_back(rep.config_id);
      continue;
    }
    if (it->second.size() > 1)
      throw ValidationError("fixture key '" + key +
                            "' is ambiguous across datasets; filter the "
                            "fixture to a single dataset first");
    fixture_used[key] = true;
    TradeoffPoint p;
    p.config_key = rep.config_id;
    p.report = rep;
    p.accuracy = it->second.front()->accuracy;
    p.complexity = axis == ComplexityAxis::Params ? rep.total_params()
                                                  : rep.total_flops();
    out.points.push_back(std::move(p));
  }
  for (const auto& [key, used] : fixture_used)
    if (!used) out.unmatched_fixture.push_back(key);
  return out;
}

// ---------------------------------------------------------------------------
// maximum-efficiency frontier
// ---------------------------------------------------------------------------

// Pareto-optimal subset under (minimize complexity, maximize accuracy):
// a point survives iff no other point has <= complexity and >= accuracy
// with at least one strict. Exact ties on both axes keep only the
// lexicographically smallest config key. Result is sorted by complexity.
inline std::vector<TradeoffPoint> efficiency_frontier(
    std::vector<TradeoffPoint> points) {
  if (points.empty())
    throw ValidationError("efficiency_frontier: no points");
  std::sort(points.begin(), points.end(),
            [](const TradeoffPoint& a, const TradeoffPoint& b) {
              if (a.complexity != b.complexity)
                return a.complexity < b.complexity;
              if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
              return a.config_key < b.config_key;
            });
  std::vector<TradeoffPoint> frontier;
  double best_accuracy = -1.0;
  std::size_t i = 0;
  while (i < points.size()) {
    // first entry of each complexity group has its maximal accuracy
    const TradeoffPoint& cand = points[i];
    if (cand.accuracy > best_accuracy) {
      frontier.push_back(cand);
      best_accuracy = cand.accuracy;
    }
    const std::uint64_t c = cand.complexity;
    while (i < points.size() && points[i].complexity == c) ++i;
  }
  return frontier;
}

// ---------------------------------------------------------------------------
// emission
// ---------------------------------------------------------------------------

enum class EmitFormat { Csv, Json };

inline constexpr const char* kReportCsvHeader =
    "config_key,feature,feature_kind,fusion,attention,params,params_offset,"
    "flops,flops_offset,wall_time_us_median,accuracy";

namespace detail {

inline void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << body;
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline std::string report_csv_row(const ComplexityReport& r,
                                  const std::string& accuracy) {
  std::ostringstream os;
  os << r.config_id << ',' << r.feature << ',' << r.feature_kind << ','
     << r.fusion << ',' << r.attention << ',' << r.trainable_params << ','
     << r.bu_param_offset << ',' << r.flops << ',' << r.bu_flop_offset << ','
     << fmt_double(r.wall_time.median_us) << ',' << accuracy << '\n';
  return os.str();
}

}  // namespace detail

inline void emit_reports(std::vector<ComplexityReport> reports,
                         EmitFormat format, const std::string& path) {
  std::sort(reports.begin(), reports.end(),
            [](const ComplexityReport& a, const ComplexityReport& b) {
              return a.config_id < b.config_id;
            });
  if (format == EmitFormat::Csv) {
    std::string body = std::string(kReportCsvHeader) + "\n";
    for (const auto& r : reports) body += detail::report_csv_row(r, "");
    detail::write_file(path, body);
    return;
  }
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : reports) j.push_back(report_to_json(r));
  detail::write_file(path, j.dump(2) + "\n");
}

// preserve_order=true keeps the caller's ordering (the frontier is emitted
// complexity-ascending); the default is deterministic config-key order.
inline void emit_points(JoinResult result, EmitFormat format,
                        const std::string& path, bool preserve_order = false) {
  if (!preserve_order) {
    std::sort(result.points.begin(), result.points.end(),
              [](const TradeoffPoint& a, const TradeoffPoint& b) {
                return a.config_key < b.config_key;
              });
  }
  std::sort(result.unmatched_reports.begin(), result.unmatched_reports.end());
  std::sort(result.unmatched_fixture.begin(), result.unmatched_fixture.end());
  if (format == EmitFormat::Csv) {
    std::string body = std::string(kReportCsvHeader) + "\n";
    for (const auto& p : result.points)
      body += detail::report_csv_row(p.report, fmt_double(p.accuracy));
    for (const auto& k : result.unmatched_reports)
      body += "# unmatched report: " + k + "\n";
    for (const auto& k : result.unmatched_fixture)
      body += "# unmatched fixture row: " + k + "\n";
    detail::write_file(path, body);
    return;
  }
  nlohmann::ordered_json j;
  j["points"] = nlohmann::ordered_json::array();
  for (const auto& p : result.points) {
    nlohmann::ordered_json pj = report_to_json(p.report);
    pj["accuracy"] = p.accuracy;
    j["points"].push_back(std::move(pj));
  }
  j["unmatched_reports"] = result.unmatched_reports;
  j["unmatched_fixture_rows"] = result.unmatched_fixture;
  detail::write_file(path, j.dump(2) + "\n");
}

// Reads a points CSV back (the emitted schema above); fields that do not
// feed the frontier keep their textual form in the report struct.
inline JoinResult parse_points_csv(const std::string& path,
                                   ComplexityAxis axis) {
  const CsvTable table = read_csv(path);
  if (table.header != split_csv_line(kReportCsvHeader))
    throw ParseError(path + ": unexpected header for a points file");
  JoinResult out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& f = table.rows[i];
    const std::string ctx = path + ":" + std::to_string(table.line_numbers[i]);
    if (f[10].empty())
      throw ValidationError(ctx + ": row has no accuracy; run the join "
                            "before the frontier");
    TradeoffPoint p;
    p.config_key = f[0];
    p.report.config_id = f[0];
    p.report.feature = f[1];
    p.report.feature_kind = f[2];
    p.report.fusion = f[3];
    p.report.attention = f[4];
    p.report.trainable_params = parse_u64_field(f[5], ctx);
    p.report.bu_param_offset = parse_u64_field(f[6], ctx);
    p.report.flops = parse_u64_field(f[7], ctx);
    p.report.bu_flop_offset = parse_u64_field(f[8], ctx);
    p.report.wall_time.median_us = parse_double_field(f[9], ctx);
    p.accuracy = parse_double_field(f[10], ctx);
    p.complexity = axis == ComplexityAxis::Params
                       ? p.report.total_params()
                       : p.report.total_flops();
    out.points.push_back(std::move(p));
  }
  return out;
}

}  // namespace vqaf
