// Minimal CSV table: header plus string cells. Numbers are written in
// shortest round-trip form so values survive a write/read cycle exactly.
#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "metasel/dataset_io.hpp"

namespace metasel {

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::string s;
  detail::append_double(s, v);
  return s;
}

inline double parse_double(std::string_view s) {
  if (s == "nan" || s.empty()) return std::nan("");
  return detail::parse_number<double>(s, "number");
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw std::out_of_range("csv: no column '" + std::string(name) + "'");
  }
  bool has_column(std::string_view name) const {
    for (const auto& h : header) {
      if (h == name) return true;
    }
    return false;
  }
  std::vector<double> numbers(std::string_view name) const {
    const auto c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(parse_double(r.at(c)));
    return out;
  }
  std::vector<std::string> strings(std::string_view name) const {
    const auto c = column(name);
    std::vector<std::string> out;
    for (const auto& r : rows) out.push_back(r.at(c));
    return out;
  }
};

inline void write_csv(std::ostream& os, const CsvTable& t) {
  const auto line = [&os](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) os << ',';
      os << cells[i];
    }
    os << '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
}

inline CsvTable read_csv(std::istream& is) {
  CsvTable t;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("csv: empty input");
  for (auto f : detail::split_fields(line)) t.header.emplace_back(f);
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> row;
    for (auto f : detail::split_fields(line)) row.emplace_back(f);
    if (row.size() != t.header.size()) throw std::runtime_error("csv: ragged row");
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline void save_csv(const std::string& path, const CsvTable& t) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_csv(os, t);
}

inline CsvTable load_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return read_csv(is);
}

}  // namespace metasel
