#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace eqcon_cli {

struct CsvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CsvData {
  std::vector<double> values;  // row-major
  std::int64_t rows = 0;
  int cols = 0;
  bool had_header = false;
};

namespace detail {

inline std::string trimmed(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
  return s.substr(b, e - b);
}

inline std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(trimmed(line.substr(start)));
      return cells;
    }
    cells.push_back(trimmed(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

inline bool parse_cell(const std::string& cell, double& out) {
  if (cell.empty()) return false;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  const auto res = std::from_chars(begin, end, out);
  return res.ec == std::errc() && res.ptr == end && std::isfinite(out);
}

}  // namespace detail

// Plain numeric CSV: one observation per row, comma separated, optional
// single header row (detected when any cell of the first row is not a
// number). Errors carry 1-based file line and column positions.
inline CsvData read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CsvError("cannot open CSV file: " + path);

  CsvData data;
  std::string line;
  std::int64_t line_no = 0;
  bool saw_any_row = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      // blank separator lines are only tolerated at the end of the file
      std::string rest;
      std::getline(in, rest);
      if (!in.eof() || !rest.empty()) {
        throw CsvError("row " + std::to_string(line_no) + " is empty");
      }
      break;
    }
    const std::vector<std::string> cells = detail::split_cells(line);
    if (!saw_any_row) {
      saw_any_row = true;
      data.cols = static_cast<int>(cells.size());
      std::vector<double> first(cells.size());
      bool all_numeric = true;
      for (std::size_t c = 0; c < cells.size(); ++c) {
        if (!detail::parse_cell(cells[c], first[c])) {
          all_numeric = false;
          break;
        }
      }
      if (all_numeric) {
        data.values.insert(data.values.end(), first.begin(), first.end());
        ++data.rows;
      } else {
        data.had_header = true;
      }
      continue;
    }
    if (static_cast<int>(cells.size()) != data.cols) {
      throw CsvError("row " + std::to_string(line_no) + " has " +
                     std::to_string(cells.size()) + " cells, expected " +
                     std::to_string(data.cols));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      if (!detail::parse_cell(cells[c], v)) {
        throw CsvError("row " + std::to_string(line_no) + ", column " +
                       std::to_string(c + 1) + ": cannot parse '" + cells[c] +
                       "' as a finite number");
      }
      data.values.push_back(v);
    }
    ++data.rows;
  }
  if (!saw_any_row) throw CsvError("CSV file is empty: " + path);
  if (data.rows == 0) {
    throw CsvError("CSV file has a header but no data rows: " + path);
  }
  return data;
}

}  // namespace eqcon_cli
