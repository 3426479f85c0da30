// Checkpoints: a versioned header followed by named parameter arrays.
//
//   metasel-checkpoint 1
//   <name> <rows> <cols>
//   <rows·cols values, one row per line>
//   ...
#pragma once

#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "metasel/csv.hpp"
#include "metasel/trainer.hpp"

namespace metasel {

inline constexpr int kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
};

namespace detail {

inline NamedArray slice(std::string name, const std::vector<double>& p, std::size_t offset, std::size_t rows,
                        std::size_t cols) {
  const auto first = p.begin() + static_cast<std::ptrdiff_t>(offset);
  return {std::move(name), rows, cols, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(rows * cols))};
}

}  // namespace detail

inline std::vector<NamedArray> checkpoint_arrays(const ModelState& m) {
  const auto& hs = m.classifier.shape;
  const auto& ss = m.selector.shape;
  const auto& hp = m.classifier.params;
  const auto& sp = m.selector.params;
  const auto& l = m.labeler;
  return {
      detail::slice("classifier.feature_weights", hp, hs.w1_offset(), hs.feature_dim, hs.input_dim),
      detail::slice("classifier.feature_bias", hp, hs.b1_offset(), 1, hs.feature_dim),
      detail::slice("classifier.head_weights", hp, hs.w2_offset(), hs.num_classes, hs.feature_dim),
      detail::slice("classifier.head_bias", hp, hs.b2_offset(), 1, hs.num_classes),
      detail::slice("selector.hidden_weights", sp, ss.w_offset(), ss.hidden, ss.feature_dim),
      detail::slice("selector.hidden_bias", sp, ss.b_offset(), 1, ss.hidden),
      detail::slice("selector.out_weights", sp, ss.v_offset(), 1, ss.hidden),
      detail::slice("selector.out_bias", sp, ss.c_offset(), 1, 1),
      detail::slice("labeler.weights", l.params, 0, l.num_classes, l.feature_dim),
      detail::slice("labeler.bias", l.params, l.bias_offset(), 1, l.num_classes),
  };
}

inline void write_checkpoint(std::ostream& os, const ModelState& m) {
  os << "metasel-checkpoint " << kCheckpointVersion << '\n';
  for (const auto& a : checkpoint_arrays(m)) {
    os << a.name << ' ' << a.rows << ' ' << a.cols << '\n';
    for (std::size_t r = 0; r < a.rows; ++r) {
      for (std::size_t c = 0; c < a.cols; ++c) {
        if (c) os << ' ';
        os << format_double(a.values[r * a.cols + c]);
      }
      os << '\n';
    }
  }
}

inline ModelState read_checkpoint(std::istream& is) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != "metasel-checkpoint") throw std::runtime_error("checkpoint: bad header");
  if (version != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version");
  std::map<std::string, NamedArray> arrays;
  NamedArray a;
  while (is >> a.name >> a.rows >> a.cols) {
    a.values.resize(a.rows * a.cols);
    std::string tok;
    for (auto& v : a.values) {
      if (!(is >> tok)) throw std::runtime_error("checkpoint: truncated array " + a.name);
      v = parse_double(tok);
    }
    arrays[a.name] = a;
  }
  const auto get = [&](const std::string& name) -> const NamedArray& {
    const auto it = arrays.find(name);
    if (it == arrays.end()) throw std::runtime_error("checkpoint: missing array " + name);
    return it->second;
  };
  const auto& fw = get("classifier.feature_weights");
  const auto& hw = get("classifier.head_weights");
  const auto& sw = get("selector.hidden_weights");
  const ClassifierShape hs{fw.cols, fw.rows, hw.rows};
  const SelectionNetShape ss{sw.cols, sw.rows};

  const auto concat = [&](std::initializer_list<const char*> names, std::size_t expect) {
    std::vector<double> out;
    for (const char* n : names) {
      const auto& arr = get(n);
      out.insert(out.end(), arr.values.begin(), arr.values.end());
    }
    if (out.size() != expect) throw std::runtime_error("checkpoint: inconsistent array shapes");
    return out;
  };
  ModelState m;
  m.classifier = ClassifierState<double>(
      hs, concat({"classifier.feature_weights", "classifier.feature_bias", "classifier.head_weights", "classifier.head_bias"},
                 hs.size()));
  m.selector = SelectionNetParams<double>(
      ss, concat({"selector.hidden_weights", "selector.hidden_bias", "selector.out_weights", "selector.out_bias"}, ss.size()));
  m.labeler = LabelingNetParams(hs.feature_dim, hs.num_classes,
                                concat({"labeler.weights", "labeler.bias"}, (hs.feature_dim + 1) * hs.num_classes));
  return m;
}

inline void save_checkpoint(const std::string& path, const ModelState& m) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_checkpoint(os, m);
}

inline ModelState load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return read_checkpoint(is);
}

}  // namespace metasel
