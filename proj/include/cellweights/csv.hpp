#ifndef CELLWEIGHTS_CSV_HPP
#define CELLWEIGHTS_CSV_HPP

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cellweights/dataset.hpp"

namespace cellweights {

/// Shortest decimal representation that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view token, double& out) {
  token = trim(token);
  if (token.empty()) return false;
  auto res = std::from_chars(token.data(), token.data() + token.size(), out);
  return res.ec == std::errc() && res.ptr == token.data() + token.size();
}

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.emplace_back(trim(std::string_view(line).substr(start)));
      break;
    }
    out.emplace_back(trim(std::string_view(line).substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

inline bool is_na_token(std::string_view t) { return trim(t) == "NA"; }

}  // namespace detail

struct CsvTable {
  std::vector<std::string> header;  // empty when the file had no header row
  Eigen::MatrixXd values;           // NA cells stored as NaN
};

/// Reads a numeric CSV with an optional header row; the literal token NA maps to NaN.
inline CsvTable read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    lines.push_back(detail::split_line(line));
  }
  if (lines.empty()) throw Error("empty file: '" + path + "'");

  auto numeric_row = [](const std::vector<std::string>& row) {
    double d;
    for (const auto& tok : row) {
      if (!detail::is_na_token(tok) && !detail::parse_double(tok, d)) return false;
    }
    return true;
  };

  CsvTable table;
  std::size_t first_data = 0;
  if (!numeric_row(lines[0])) {
    table.header = lines[0];
    first_data = 1;
  }
  if (first_data >= lines.size()) throw Error("no data rows in '" + path + "'");

  const std::size_t n = lines.size() - first_data;
  const std::size_t d = lines[first_data].size();
  table.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = lines[first_data + i];
    if (row.size() != d) {
      throw Error("shape mismatch in '" + path + "': row " + std::to_string(i + 1) + " has " +
                  std::to_string(row.size()) + " cells, expected " + std::to_string(d));
    }
    for (std::size_t j = 0; j < d; ++j) {
      if (detail::is_na_token(row[j])) {
        table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = missing_value();
      } else {
        double v;
        if (!detail::parse_double(row[j], v)) {
          throw Error("invalid numeric token '" + row[j] + "' in '" + path + "' at row " +
                      std::to_string(i + 1) + ", column " + std::to_string(j + 1));
        }
        table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      }
    }
  }
  return table;
}

/// Loads a data CSV and a weight CSV of identical shape into a validated
/// WeightedDataset. NA data tokens are accepted only where the weight is 0.
inline WeightedDataset load_weighted_csv(const std::string& data_path,
                                         const std::string& weight_path) {
  CsvTable data = read_csv_matrix(data_path);
  CsvTable weights = read_csv_matrix(weight_path);
  if (data.values.rows() != weights.values.rows() || data.values.cols() != weights.values.cols()) {
    throw Error("shape mismatch: '" + data_path + "' is " + std::to_string(data.values.rows()) +
                "x" + std::to_string(data.values.cols()) + ", '" + weight_path + "' is " +
                std::to_string(weights.values.rows()) + "x" +
                std::to_string(weights.values.cols()));
  }
  return make_weighted_dataset(std::move(data.values), std::move(weights.values));
}

/// Writes an unpacked dataset as CSV: columns c1..cd, v, source, level.
/// Missing cells are written as the token NA.
inline void write_incomplete_csv(const UnpackedDataset& u, std::ostream& out) {
  for (Eigen::Index j = 0; j < u.dim; ++j) out << 'c' << (j + 1) << ',';
  out << "v,source,level\n";
  for (const auto& row : u.rows) {
    for (Eigen::Index j = 0; j < u.dim; ++j) {
      if (row.observed(j)) out << format_double(row.values[j]);
      else out << "NA";
      out << ',';
    }
    out << format_double(row.row_weight) << ',' << row.source_index << ',' << row.level_index
        << '\n';
  }
}

inline void write_incomplete_csv(const UnpackedDataset& u, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_incomplete_csv(u, static_cast<std::ostream&>(out));
  if (!out) throw Error("write failed for '" + path + "'");
}

/// Reads a CSV produced by write_incomplete_csv. Round-trips bit-exactly.
inline UnpackedDataset read_incomplete_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error("empty file: '" + path + "'");
  auto header = detail::split_line(line);
  if (header.size() < 4 || header[header.size() - 3] != "v" ||
      header[header.size() - 2] != "source" || header.back() != "level") {
    throw Error("'" + path + "' is not an unpacked-dataset CSV (expected trailing v,source,level columns)");
  }
  UnpackedDataset u;
  u.dim = static_cast<Eigen::Index>(header.size()) - 3;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_line(line);
    if (cells.size() != header.size()) {
      throw Error("shape mismatch in '" + path + "' at line " + std::to_string(lineno));
    }
    IncompleteRow row;
    row.values.resize(u.dim);
    for (Eigen::Index j = 0; j < u.dim; ++j) {
      if (detail::is_na_token(cells[j])) {
        row.values[j] = missing_value();
      } else if (!detail::parse_double(cells[j], row.values[j])) {
        throw Error("invalid numeric token '" + cells[j] + "' in '" + path + "' at line " +
                    std::to_string(lineno));
      }
    }
    double v, src, lvl;
    if (!detail::parse_double(cells[u.dim], v) || !detail::parse_double(cells[u.dim + 1], src) ||
        !detail::parse_double(cells[u.dim + 2], lvl)) {
      throw Error("invalid v/source/level in '" + path + "' at line " + std::to_string(lineno));
    }
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw Error("row weight must be positive in '" + path + "' at line " + std::to_string(lineno));
    }
    row.row_weight = v;
    row.source_index = static_cast<Eigen::Index>(src);
    row.level_index = static_cast<int>(lvl);
    if (row.observed_count() == 0) {
      throw Error("row with no observed cells in '" + path + "' at line " + std::to_string(lineno));
    }
    u.rows.push_back(std::move(row));
  }
  return u;
}

}  // namespace cellweights

#endif
