#pragma once

// Minimal CSV tables: comma separated, header row required, no quoting.
// Doubles are written in shortest round-trip form so files reproduce
// in-memory values bitwise.

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <Eigen/Dense>

#include "fst/pipeline.hpp"

namespace fst {

/// Bad input data or a header that lacks a bound column.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t size() const { return rows.size(); }

  std::optional<std::size_t> find(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  }

  std::size_t index(const std::string& name) const {
    const auto i = find(name);
    if (!i) throw SchemaError("missing column '" + name + "'");
    return *i;
  }

  std::vector<std::string> column(const std::string& name) const {
    const std::size_t j = index(name);
    std::vector<std::string> out;
    out.reserve(rows.size());
    for (const auto& row : rows) out.push_back(row[j]);
    return out;
  }

  void add_column(const std::string& name, std::vector<std::string> values) {
    if (values.size() != rows.size()) throw std::logic_error("column length mismatch");
    header.push_back(name);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].push_back(std::move(values[i]));
  }
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline void strip_cr(std::string& s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
}

}  // namespace detail

inline Table read_csv(std::istream& in) {
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("CSV input is empty (header row required)");
  detail::strip_cr(line);
  t.header = detail::split_line(line);
  std::set<std::string> seen;
  for (const auto& h : t.header) {
    if (h.empty()) throw SchemaError("empty column name in header");
    if (!seen.insert(h).second) throw SchemaError("duplicate column '" + h + "'");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (line.empty()) continue;
    auto cells = detail::split_line(line);
    if (cells.size() != t.header.size()) {
      throw SchemaError("line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                        " fields, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open '" + path + "'");
  return read_csv(in);
}

inline void write_csv(std::ostream& out, const Table& t) {
  auto write_row = [&](const std::vector<std::string>& row) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      out << row[j];
    }
    out << '\n';
  };
  write_row(t.header);
  for (const auto& row : t.rows) write_row(row);
}

inline void write_csv(const std::string& path, const Table& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write '" + path + "'");
  write_csv(out, t);
}

inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& column) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (s.empty() || res.ec != std::errc() || res.ptr != last) {
    throw SchemaError("column '" + column + "': '" + s + "' is not a number");
  }
  return v;
}

inline std::optional<long> parse_int(const std::string& s) {
  long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Maps category strings to ids in [0, k). A non-empty alphabet fixes the
/// mapping; otherwise non-negative integers map to themselves and anything
/// else is sorted lexicographically.
inline std::vector<int> encode_categories(const std::vector<std::string>& values,
                                          std::vector<std::string>& alphabet,
                                          const std::string& column) {
  if (alphabet.empty()) {
    bool all_int = true;
    long max_id = -1;
    for (const auto& v : values) {
      const auto i = parse_int(v);
      if (!i || *i < 0) {
        all_int = false;
        break;
      }
      max_id = std::max(max_id, *i);
    }
    if (all_int) {
      for (long i = 0; i <= max_id; ++i) alphabet.push_back(std::to_string(i));
    } else {
      const std::set<std::string> uniq(values.begin(), values.end());
      alphabet.assign(uniq.begin(), uniq.end());
    }
  }
  std::map<std::string, int> id;
  for (std::size_t i = 0; i < alphabet.size(); ++i) id[alphabet[i]] = static_cast<int>(i);
  std::vector<int> out;
  out.reserve(values.size());
  for (const auto& v : values) {
    auto it = id.find(v);
    if (it == id.end()) {
      // Integer spellings like "01" still match.
      if (const auto i = parse_int(v)) it = id.find(std::to_string(*i));
    }
    if (it == id.end()) throw SchemaError("column '" + column + "': value '" + v + "' outside the alphabet");
    out.push_back(it->second);
  }
  return out;
}

/// How CSV columns map onto a Dataset.
struct ColumnBindings {
  std::string protected_col;  // empty: no protected attribute
  std::string label_col;      // empty: no labels
  std::string score_col;      // empty: internal score model
  std::vector<std::string> features;
  std::vector<std::string> event_columns;  // posterior columns of general constraints
  std::vector<std::string> group_names;
  std::vector<std::string> label_names;
};

/// Feature columns default to every column that is not otherwise bound.
inline std::vector<std::string> default_features(const Table& t, const ColumnBindings& b) {
  std::vector<std::string> out;
  for (const auto& h : t.header) {
    if (h == b.protected_col || h == b.label_col || h == b.score_col) continue;
    if (std::find(b.event_columns.begin(), b.event_columns.end(), h) != b.event_columns.end()) continue;
    out.push_back(h);
  }
  return out;
}

struct DatasetRequirements {
  bool groups = true;
  bool labels = true;
};

/// Builds a Dataset. Alphabets left empty in b are inferred and written back.
inline Dataset to_dataset(const Table& t, ColumnBindings& b, DatasetRequirements need = {}) {
  if (t.rows.empty()) throw SchemaError("CSV has no data rows");
  Dataset d;
  const auto n = static_cast<Eigen::Index>(t.size());

  d.features.resize(n, static_cast<Eigen::Index>(b.features.size()));
  for (std::size_t j = 0; j < b.features.size(); ++j) {
    const std::size_t c = t.index(b.features[j]);
    for (Eigen::Index i = 0; i < n; ++i) {
      d.features(i, static_cast<Eigen::Index>(j)) =
          parse_double(t.rows[static_cast<std::size_t>(i)][c], b.features[j]);
    }
  }

  if (!b.protected_col.empty() && (need.groups || t.find(b.protected_col))) {
    d.groups = encode_categories(t.column(b.protected_col), b.group_names, b.protected_col);
  }
  d.num_groups = static_cast<int>(b.group_names.size());

  if (!b.label_col.empty() && (need.labels || t.find(b.label_col))) {
    d.labels = encode_categories(t.column(b.label_col), b.label_names, b.label_col);
    if (b.label_names.size() > 2) {
      throw SchemaError("label column '" + b.label_col + "' is not binary");
    }
    if (b.label_names.size() == 1) {
      // A lone integer label keeps its meaning; a lone string is positive.
      const auto i = parse_int(b.label_names.front());
      if (!i || *i == 1) {
        b.label_names.insert(b.label_names.begin(), i ? "0" : "");
        for (int& y : d.labels) y = 1;
      } else if (*i == 0) {
        b.label_names.push_back("1");
      }
    }
  }

  if (!b.score_col.empty()) {
    const std::size_t c = t.index(b.score_col);
    Eigen::VectorXd s(n);
    for (Eigen::Index i = 0; i < n; ++i) s(i) = parse_double(t.rows[static_cast<std::size_t>(i)][c], b.score_col);
    d.base_scores = s;
  }
  for (const auto& name : b.event_columns) {
    const std::size_t c = t.index(name);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = parse_double(t.rows[static_cast<std::size_t>(i)][c], name);
    d.event_columns[name] = v;
  }
  try {
    d.validate();
  } catch (const std::invalid_argument& e) {
    throw SchemaError(e.what());
  }
  return d;
}

/// Table holding a Dataset's feature, group and label columns.
inline Table to_table(const Dataset& d, const std::vector<std::string>& feature_names,
                      const std::string& group_col, const std::string& label_col) {
  Table t;
  t.header = feature_names;
  if (!d.groups.empty()) t.header.push_back(group_col);
  if (!d.labels.empty()) t.header.push_back(label_col);
  t.rows.resize(static_cast<std::size_t>(d.size()));
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    auto& row = t.rows[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < d.features.cols(); ++j) row.push_back(format_double(d.features(i, j)));
    if (!d.groups.empty()) row.push_back(std::to_string(d.groups[static_cast<std::size_t>(i)]));
    if (!d.labels.empty()) row.push_back(std::to_string(d.labels[static_cast<std::size_t>(i)]));
  }
  return t;
}

}  // namespace fst
