// Columnar text serialization for Dataset.
//
//   metasel-dataset,1,<num_classes>,<input_dim>
//   <id>,<observed_label>,<tag>,<x_0>,...,<x_{d-1}>
//
// tag is `clean`, `out`, or `in:<true_label>`. Reals are written in shortest
// round-trip form, so write→read is bit-exact.
#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "metasel/types.hpp"

namespace metasel {

inline constexpr std::string_view kDatasetMagic = "metasel-dataset";
inline constexpr int kDatasetVersion = 1;

namespace detail {

inline void append_double(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("to_chars failed");
  out.append(buf, ptr);
}

inline std::vector<std::string_view> split_fields(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

template <class T>
T parse_number(std::string_view s, const char* what) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw std::runtime_error(std::string("parse error: bad ") + what + " '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace detail

inline std::string format_tag(const NoiseTag& t) {
  switch (t.kind()) {
    case NoiseKind::clean: return "clean";
    case NoiseKind::out_dist: return "out";
    case NoiseKind::in_dist: return "in:" + std::to_string(t.true_label());
  }
  return "?";
}

inline NoiseTag parse_tag(std::string_view s) {
  if (s == "clean") return NoiseTag::clean();
  if (s == "out") return NoiseTag::out_dist();
  if (s.substr(0, 3) == "in:") return NoiseTag::in_dist(detail::parse_number<std::size_t>(s.substr(3), "tag"));
  throw std::runtime_error("parse error: unknown tag '" + std::string(s) + "'");
}

inline void write_dataset(std::ostream& os, const Dataset& d) {
  os << kDatasetMagic << ',' << kDatasetVersion << ',' << d.num_classes() << ',' << d.input_dim() << '\n';
  std::string line;
  for (const auto& s : d.samples()) {
    line.clear();
    line += std::to_string(s.id);
    line += ',';
    line += std::to_string(s.observed_label);
    line += ',';
    line += format_tag(s.truth);
    for (double v : s.input) {
      line += ',';
      detail::append_double(line, v);
    }
    line += '\n';
    os << line;
  }
}

inline Dataset read_dataset(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("parse error: empty dataset stream");
  const auto header = detail::split_fields(line);
  if (header.size() != 4 || header[0] != kDatasetMagic) {
    throw std::runtime_error("parse error: missing metasel-dataset header");
  }
  if (detail::parse_number<int>(header[1], "version") != kDatasetVersion) {
    throw std::runtime_error("parse error: unsupported dataset version");
  }
  const auto num_classes = detail::parse_number<std::size_t>(header[2], "num_classes");
  const auto input_dim = detail::parse_number<std::size_t>(header[3], "input_dim");

  std::vector<Sample> samples;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_fields(line);
    if (f.size() != 3 + input_dim) {
      throw std::runtime_error("parse error: line " + std::to_string(line_no) + " has " + std::to_string(f.size()) +
                               " fields, expected " + std::to_string(3 + input_dim));
    }
    Sample s;
    s.id = detail::parse_number<std::size_t>(f[0], "id");
    s.observed_label = detail::parse_number<std::size_t>(f[1], "label");
    s.truth = parse_tag(f[2]);
    s.input.reserve(input_dim);
    for (std::size_t k = 0; k < input_dim; ++k) s.input.push_back(detail::parse_number<double>(f[3 + k], "value"));
    samples.push_back(std::move(s));
  }
  return Dataset(num_classes, input_dim, std::move(samples));
}

inline void save_dataset(const std::string& path, const Dataset& d) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_dataset(os, d);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return read_dataset(is);
}

}  // namespace metasel
