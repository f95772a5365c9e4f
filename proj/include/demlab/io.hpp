#pragma once

// Data ingestion and emission: plain CSV tables, the checkpoint / transaction
// / response readers with integrity checks, and the flat key-value scenario
// file. Errors carry the offending row or line number.

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "demlab/checkpoint.hpp"
#include "demlab/clusterse.hpp"
#include "demlab/common.hpp"
#include "demlab/pse.hpp"

namespace demlab::io {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(current);
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  fields.push_back(current);
  return fields;
}

inline double parse_double(const std::string& s, std::size_t line_no, const std::string& field) {
  double value = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc() || res.ptr != end || s.empty()) {
    throw input_error("line " + std::to_string(line_no) + ": field '" + field +
                      "' is not a number: '" + s + "'");
  }
  return value;
}

inline long long parse_count(const std::string& s, std::size_t line_no, const std::string& field) {
  long long value = 0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc() || res.ptr != end || s.empty()) {
    throw input_error("line " + std::to_string(line_no) + ": field '" + field +
                      "' is not an integer: '" + s + "'");
  }
  return value;
}

inline std::string format_double(double v) {
  std::ostringstream out;
  out.precision(std::numeric_limits<double>::max_digits10);
  out << v;
  return out.str();
}

}  // namespace detail

/// Reads a comma-separated table: one header line, then data rows of the same
/// width. Fields must not contain commas or newlines (none of the toolkit's
/// identifiers do).
inline CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    auto fields = detail::split_line(line);
    if (table.header.empty()) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw input_error("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(table.header.size()) + " fields, got " +
                        std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (table.header.empty()) throw input_error("empty csv: no header");
  return table;
}

inline void write_csv(std::ostream& out, const CsvTable& table) {
  const auto emit = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (fields[i].find_first_of(",\n\r") != std::string::npos) {
        throw input_error("csv field contains a separator: '" + fields[i] + "'");
      }
      if (i) out << ',';
      out << fields[i];
    }
    out << '\n';
  };
  emit(table.header);
  for (const auto& row : table.rows) emit(row);
}

namespace detail {

inline void require_header(const CsvTable& table, const std::vector<std::string>& expected) {
  if (table.header != expected) {
    std::string want;
    for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
    std::string got;
    for (const auto& h : table.header) got += (got.empty() ? "" : ",") + h;
    throw input_error("unexpected csv header: want '" + want + "', got '" + got + "'");
  }
  if (table.rows.empty()) throw input_error("no rows");
}

}  // namespace detail

inline const std::vector<std::string>& checkpoint_header() {
  static const std::vector<std::string> h{"experiment_id", "variant_id", "metric_id",
                                          "time_index",    "count_c",    "mean_c",
                                          "variance_c"};
  return h;
}

/// Parses checkpoint series grouped by (experiment, variant, metric), sorted
/// by time index, with cumulative-count monotonicity enforced.
inline std::vector<CheckpointSeries> read_checkpoint_series(std::istream& in) {
  const auto table = read_csv(in);
  detail::require_header(table, checkpoint_header());
  struct Tagged {
    CheckpointRow row;
    std::size_t line;
  };
  std::map<std::vector<std::string>, std::vector<Tagged>> groups;
  std::vector<std::vector<std::string>> order;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    const std::size_t line_no = i + 2;  // header is line 1
    std::vector<std::string> key{r[0], r[1], r[2]};
    CheckpointRow row;
    row.time_index = detail::parse_count(r[3], line_no, "time_index");
    row.count_c = detail::parse_count(r[4], line_no, "count_c");
    row.mean_c = detail::parse_double(r[5], line_no, "mean_c");
    row.variance_c = detail::parse_double(r[6], line_no, "variance_c");
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back({row, line_no});
  }
  std::vector<CheckpointSeries> out;
  for (const auto& key : order) {
    auto& tagged = groups[key];
    std::stable_sort(tagged.begin(), tagged.end(), [](const Tagged& a, const Tagged& b) {
      return a.row.time_index < b.row.time_index;
    });
    CheckpointSeries series;
    series.experiment_id = key[0];
    series.variant_id = key[1];
    series.metric_id = key[2];
    for (std::size_t i = 0; i < tagged.size(); ++i) {
      if (i > 0 && tagged[i].row.time_index == tagged[i - 1].row.time_index) {
        throw input_error("line " + std::to_string(tagged[i].line) +
                          ": duplicate time_index for " + key[0] + "/" + key[1] + "/" + key[2]);
      }
      if (i > 0 && tagged[i].row.count_c < tagged[i - 1].row.count_c) {
        throw input_error("line " + std::to_string(tagged[i].line) +
                          ": cumulative count decreases for " + key[0] + "/" + key[1] + "/" +
                          key[2]);
      }
      series.rows.push_back(tagged[i].row);
    }
    series.validate();
    out.push_back(std::move(series));
  }
  return out;
}

inline void write_checkpoint_series(std::ostream& out,
                                    const std::vector<CheckpointSeries>& series) {
  CsvTable table;
  table.header = checkpoint_header();
  for (const auto& s : series) {
    for (const auto& r : s.rows) {
      table.rows.push_back({s.experiment_id, s.variant_id, s.metric_id,
                            std::to_string(r.time_index), std::to_string(r.count_c),
                            detail::format_double(r.mean_c), detail::format_double(r.variance_c)});
    }
  }
  write_csv(out, table);
}

inline const std::vector<std::string>& transactions_header() {
  static const std::vector<std::string> h{"user_id", "product_id", "value"};
  return h;
}

/// Transaction rows; product_id may be empty for one-way use.
inline clusterse::ClusteredRecords read_transactions(std::istream& in) {
  const auto table = read_csv(in);
  detail::require_header(table, transactions_header());
  clusterse::ClusteredRecords records;
  records.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const std::size_t line_no = i + 2;
    const auto& r = table.rows[i];
    if (r[0].empty()) throw input_error("line " + std::to_string(line_no) + ": empty user_id");
    records.push_back({r[0], r[1], detail::parse_double(r[2], line_no, "value")});
  }
  return records;
}

inline void write_transactions(std::ostream& out, const clusterse::ClusteredRecords& records) {
  CsvTable table;
  table.header = transactions_header();
  for (const auto& r : records) {
    table.rows.push_back({r.user_id, r.product_id, detail::format_double(r.value)});
  }
  write_csv(out, table);
}

struct ResponseRow {
  std::string unit_id;
  std::string group;
  double value = 0.0;
};

struct ResponseTable {
  std::vector<ResponseRow> rows;

  /// Distinct group labels in first-appearance order.
  std::vector<std::string> groups() const {
    std::vector<std::string> out;
    for (const auto& r : rows) {
      if (std::find(out.begin(), out.end(), r.group) == out.end()) out.push_back(r.group);
    }
    return out;
  }

  std::vector<double> values_of(const std::string& group) const {
    std::vector<double> out;
    for (const auto& r : rows) {
      if (r.group == group) out.push_back(r.value);
    }
    return out;
  }
};

inline const std::vector<std::string>& responses_header() {
  static const std::vector<std::string> h{"unit_id", "group", "value"};
  return h;
}

inline ResponseTable read_responses(std::istream& in) {
  const auto table = read_csv(in);
  detail::require_header(table, responses_header());
  ResponseTable out;
  out.rows.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const std::size_t line_no = i + 2;
    const auto& r = table.rows[i];
    if (r[0].empty()) throw input_error("line " + std::to_string(line_no) + ": empty unit_id");
    if (r[1].empty()) throw input_error("line " + std::to_string(line_no) + ": empty group");
    out.rows.push_back({r[0], r[1], detail::parse_double(r[2], line_no, "value")});
  }
  return out;
}

inline void write_responses(std::ostream& out, const ResponseTable& responses) {
  CsvTable table;
  table.header = responses_header();
  for (const auto& r : responses.rows) {
    table.rows.push_back({r.unit_id, r.group, detail::format_double(r.value)});
  }
  write_csv(out, table);
}

/// Flat key-value scenario file ("key = value" lines, '#' comments). Group
/// keys follow the treatment grid: mu_C0/var_C0 .. mu_Ipsi/var_Ipsi.
inline pse::PseScenario read_scenario(std::istream& in) {
  std::map<std::string, double> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw input_error("scenario line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    values[key] = detail::parse_double(value, line_no, key);
  }
  pse::PseScenario s;
  const auto take = [&](const std::string& key, double* slot, bool required, double fallback) {
    const auto it = values.find(key);
    if (it == values.end()) {
      if (required) throw input_error("scenario: missing key '" + key + "'");
      *slot = fallback;
      return;
    }
    *slot = it->second;
    values.erase(it);
  };
  take("n0", &s.n0, true, 0.0);
  take("n1", &s.n1, true, 0.0);
  take("n2", &s.n2, true, 0.0);
  take("n3", &s.n3, true, 0.0);
  const std::vector<std::pair<std::string, pse::GroupStats*>> cells{
      {"C0", &s.c0}, {"C1", &s.c1}, {"C2", &s.c2},     {"C3", &s.c3},
      {"I1", &s.i1}, {"I2", &s.i2}, {"Iphi", &s.iphi}, {"Ipsi", &s.ipsi}};
  for (const auto& [name, stats] : cells) {
    take("mu_" + name, &stats->mu, true, 0.0);
    take("var_" + name, &stats->var, true, 1.0);
  }
  take("alpha", &s.alpha, false, 0.05);
  take("power", &s.power_target, false, 0.8);
  if (!values.empty()) {
    throw input_error("scenario: unknown key '" + values.begin()->first + "'");
  }
  s.validate();
  return s;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open input file: " + path);
  return in;
}

}  // namespace demlab::io
