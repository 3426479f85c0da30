// Oracle suite shared by the `verify` subcommand and the acceptance tests.
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "metasel/classifier.hpp"
#include "metasel/labeler.hpp"
#include "metasel/oracle.hpp"
#include "metasel/selector.hpp"
#include "metasel/splitter.hpp"

namespace metasel::verify {

/// Small model used by every gradient check.
struct SmallModel {
  std::size_t input_dim = 4;
  std::size_t feature_dim = 6;
  std::size_t num_classes = 3;
  std::size_t hidden = 8;
  std::size_t batch = 8;
  std::size_t meta_batch = 4;
  double alpha = 0.5;
};

struct Instance {
  ClassifierState<double> h;
  SelectionNetParams<double> s;
  LabelingNetParams l;
  Batch batch;
  Batch meta;
  std::vector<std::vector<double>> inputs;  // storage behind the Example spans
};

/// Random parameters (N(0, 0.5²)) and random labeled inputs. Instances whose
/// S_net pre-activations come within `kink_margin` of zero are redrawn.
inline Instance draw_instance(const SmallModel& m, std::mt19937_64& rng, double kink_margin = 1e-3,
                              std::size_t* redraws = nullptr) {
  std::normal_distribution<double> n01(0.0, 1.0), p(0.0, 0.5);
  std::uniform_int_distribution<std::size_t> label(0, m.num_classes - 1);
  for (;;) {
    Instance in;
    in.h = ClassifierState<double>(ClassifierShape{m.input_dim, m.feature_dim, m.num_classes});
    for (auto& v : in.h.params) v = p(rng);
    in.s = SelectionNetParams<double>(SelectionNetShape{m.feature_dim, m.hidden});
    for (auto& v : in.s.params) v = p(rng);
    in.l = LabelingNetParams(m.feature_dim, m.num_classes);
    for (auto& v : in.l.params) v = p(rng);
    in.inputs.resize(m.batch + m.meta_batch);
    for (auto& x : in.inputs) {
      x.resize(m.input_dim);
      for (auto& v : x) v = n01(rng);
    }
    for (std::size_t j = 0; j < m.batch; ++j) in.batch.push_back({j, in.inputs[j], label(rng)});
    for (std::size_t i = 0; i < m.meta_batch; ++i) {
      in.meta.push_back({100 + i, in.inputs[m.batch + i], label(rng)});
    }
    if (oracle::min_abs_preactivation(in.h, in.s, in.batch) >= kink_margin) return in;
    if (redraws) ++*redraws;
  }
}

struct CheckOptions {
  std::size_t instances = 20;
  std::uint64_t seed = 1;
  double eps = oracle::kDefaultEpsilon;  // meta-gradient, three-point
  double gradient_eps = 1e-3;            // check_gradients, five-point
  double floor = 1e-8;                   // relative-error denominator floor
};

/// Accumulates per-block error statistics across instances.
class ErrorTable {
 public:
  void add(const std::string& comparison, const std::vector<oracle::BlockError>& blocks) {
    for (const auto& b : blocks) {
      auto& acc = find(comparison, b.block);
      acc.error.max_rel = std::max(acc.error.max_rel, b.max_rel);
      acc.error.mean_rel += b.mean_rel * static_cast<double>(b.count);
      acc.error.count += b.count;
    }
  }
  std::vector<oracle::ReportRow> rows() const {
    auto out = rows_;
    for (auto& r : out) {
      if (r.error.count) r.error.mean_rel /= static_cast<double>(r.error.count);
    }
    return out;
  }
  double max_error(const std::string& comparison) const {
    double m = 0.0;
    for (const auto& r : rows_) {
      if (r.comparison == comparison) m = std::max(m, r.error.max_rel);
    }
    return m;
  }

 private:
  oracle::ReportRow& find(const std::string& comparison, const std::string& block) {
    for (auto& r : rows_) {
      if (r.comparison == comparison && r.error.block == block) return r;
    }
    rows_.push_back({comparison, {block, 0.0, 0.0, 0}});
    return rows_.back();
  }
  std::vector<oracle::ReportRow> rows_;
};

struct MetaGradientReport {
  ErrorTable table;
  double explicit_vs_autodiff = 0.0;
  double explicit_vs_fd = 0.0;
  double autodiff_vs_fd = 0.0;
  double t_matrix_assembly = 0.0;  // max |assembled − explicit| (absolute)
  std::size_t redraws = 0;
};

inline MetaGradientReport check_meta_gradient(const CheckOptions& o, const SmallModel& m = {}) {
  MetaGradientReport r;
  std::mt19937_64 rng(o.seed);
  for (std::size_t t = 0; t < o.instances; ++t) {
    const auto in = draw_instance(m, rng, 1e-3, &r.redraws);
    const auto blocks = oracle::selection_blocks(in.s.shape);
    const auto mg = meta_gradient(in.h, in.s, in.batch, in.meta, m.alpha);
    const auto ad = meta_gradient_autodiff(in.h, in.s, in.batch, in.meta, m.alpha);
    const auto fd = oracle::fd_meta_gradient(in.h, in.s, in.batch, in.meta, m.alpha, o.eps);
    r.table.add("meta_explicit_vs_autodiff", oracle::compare_by_block(mg.gradient, ad, blocks, o.floor));
    r.table.add("meta_explicit_vs_fd", oracle::compare_by_block(mg.gradient, fd, blocks, o.floor));
    r.table.add("meta_autodiff_vs_fd", oracle::compare_by_block(ad, fd, blocks, o.floor));
    const auto T = oracle::brute_T_matrix(in.h, mg.lookahead, in.batch, in.meta);
    const auto assembled = oracle::assemble_meta_gradient(T, in.h, in.s, in.batch, m.alpha);
    for (std::size_t k = 0; k < assembled.size(); ++k) {
      r.t_matrix_assembly = std::max(r.t_matrix_assembly, std::abs(assembled[k] - mg.gradient[k]));
    }
  }
  r.explicit_vs_autodiff = r.table.max_error("meta_explicit_vs_autodiff");
  r.explicit_vs_fd = r.table.max_error("meta_explicit_vs_fd");
  r.autodiff_vs_fd = r.table.max_error("meta_autodiff_vs_fd");
  return r;
}

/// Analytic vs finite-difference gradients of every hand-differentiated loss:
/// per-sample and weighted classifier loss, pooled clean ∪ soft-relabeled
/// loss, S_net score, L_net loss, and L_net loss through the feature layer.
inline ErrorTable check_gradients(const CheckOptions& o, const SmallModel& m = {}) {
  ErrorTable table;
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double eps = o.gradient_eps;
  constexpr auto five = oracle::Stencil::five_point;
  for (std::size_t t = 0; t < o.instances; ++t) {
    const auto in = draw_instance(m, rng);
    const auto cblocks = oracle::classifier_blocks(in.h.shape);

    const Batch one{in.batch[0]};
    const std::vector<double> unit{1.0};
    table.add("classifier_per_sample",
              oracle::compare_by_block(per_sample_grad(in.h, one[0].input, one[0].label),
                                       oracle::fd_loss_gradient(in.h, one, unit, eps, five), cblocks, o.floor));

    std::vector<double> w(in.batch.size());
    for (auto& v : w) v = u01(rng);
    table.add("classifier_weighted",
              oracle::compare_by_block(weighted_grad(in.h, in.batch, w), oracle::fd_loss_gradient(in.h, in.batch, w, eps, five),
                                       cblocks, o.floor));

    // Pooled mean over 4 clean + 4 soft-relabeled samples.
    const Batch clean(in.batch.begin(), in.batch.begin() + 4);
    std::vector<RelabeledExample> relabeled;
    for (std::size_t j = 4; j < in.batch.size(); ++j) {
      const auto f = features(in.h, in.batch[j].input);
      relabeled.push_back({in.batch[j], pseudo_label(in.l, f, PseudoLabelMode::soft)});
    }
    const auto pooled_fd = oracle::central_difference(
        [&](const Vec<double>& p) {
          const ClassifierState<double> h(in.h.shape, p);
          double acc = 0.0;
          for (const auto& e : clean) acc += per_sample_loss(h, e.input, e.label);
          for (const auto& r : relabeled) acc += per_sample_loss(h, r.example.input, r.target);
          return acc / static_cast<double>(clean.size() + relabeled.size());
        },
        in.h.params, eps, five);
    table.add("classifier_pooled_soft",
              oracle::compare_by_block(pooled_mean_grad(in.h, clean, relabeled), pooled_fd, cblocks, o.floor));

    const auto f0 = features(in.h, in.batch[0].input);
    const auto score_fd = oracle::central_difference(
        [&](const Vec<double>& p) {
          return score_in_distribution(SelectionNetParams<double>(in.s.shape, p), std::span<const double>(f0));
        },
        in.s.params, eps, five);
    table.add("selection_score",
              oracle::compare_by_block(score_gradient(in.s, f0), score_fd, oracle::selection_blocks(in.s.shape), o.floor));

    std::vector<Vec<double>> feats;
    std::vector<std::size_t> labels;
    for (const auto& e : in.meta) {
      feats.push_back(features(in.h, e.input));
      labels.push_back(e.label);
    }
    Vec<double> lg;
    labeler_loss_grad(in.l, feats, labels, &lg);
    const auto l_fd = oracle::central_difference(
        [&](const Vec<double>& p) {
          return labeler_loss_grad(LabelingNetParams(in.l.feature_dim, in.l.num_classes, p), feats, labels, nullptr);
        },
        in.l.params, eps, five);
    const std::vector<oracle::ParamBlock> lblocks = {{"labeler_weights", 0, in.l.bias_offset()},
                                                     {"labeler_bias", in.l.bias_offset(), in.l.num_classes}};
    table.add("labeler_params", oracle::compare_by_block(lg, l_fd, lblocks, o.floor));

    const auto lf_fd = oracle::central_difference(
        [&](const Vec<double>& p) {
          const ClassifierState<double> h(in.h.shape, p);
          std::vector<Vec<double>> fs;
          for (const auto& e : in.meta) fs.push_back(features(h, e.input));
          return labeler_loss_grad(in.l, fs, labels, nullptr);
        },
        in.h.params, eps, five);
    table.add("labeler_features", oracle::compare_by_block(labeler_feature_grad(in.l, in.meta, in.h), lf_fd, cblocks, o.floor));
  }
  return table;
}

struct SubsetReport {
  std::size_t split_trials = 0, split_matches = 0;
  std::size_t select_trials = 0, select_matches = 0;
};

/// Greedy splitter and selector against exhaustive enumeration on random
/// instances of size 1..max_size.
inline SubsetReport check_subsets(std::size_t trials, std::uint64_t seed, std::size_t max_size = 8) {
  SubsetReport r;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> size(1, max_size);
  std::uniform_real_distribution<double> u01(0.0, 1.0), loss(0.0, 5.0);
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t n = size(rng);
    std::vector<std::size_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = 1000 + (i * 7919) % 997;

    std::vector<double> losses(n);
    for (auto& v : losses) v = loss(rng);
    const double tau = u01(rng);
    const auto split = split_indices(losses, ids, tau);
    const auto want_clean = oracle::exhaustive_subset(
        losses, {oracle::SizeConstraint::Kind::at_least, clean_count(n, tau)}, oracle::Objective::min_sum);
    ++r.split_trials;
    r.split_matches += split.clean == want_clean;

    std::vector<double> scores(n);
    for (auto& v : scores) v = u01(rng);
    const double rate = u01(rng);
    auto picked = select_top_scores(scores, ids, rate);
    std::sort(picked.begin(), picked.end());
    const auto want_sel = oracle::exhaustive_subset(
        scores, {oracle::SizeConstraint::Kind::at_most, in_dist_count(n, rate)}, oracle::Objective::max_sum);
    ++r.select_trials;
    r.select_matches += picked == want_sel;
  }
  return r;
}

}  // namespace metasel::verify
