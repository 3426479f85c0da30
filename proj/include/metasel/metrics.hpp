// Evaluation metrics. This is the only module that reads noise tags.
#pragma once

#include <cmath>
#include <cstddef>
#include <iostream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "metasel/classifier.hpp"
#include "metasel/selector.hpp"
#include "metasel/trainer.hpp"
#include "metasel/types.hpp"

namespace metasel {

/// Average classification accuracy: mean over classes of per-class accuracy,
/// in percent. Classes absent from `truth` are skipped (with a warning to
/// `warn` when given).
inline double compute_aca(std::span<const std::size_t> predictions, std::span<const std::size_t> truth,
                          std::size_t num_classes, std::ostream* warn = nullptr) {
  if (predictions.size() != truth.size()) throw std::invalid_argument("compute_aca: length mismatch");
  std::vector<std::size_t> total(num_classes, 0), correct(num_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= num_classes) throw std::invalid_argument("compute_aca: truth label out of range");
    ++total[truth[i]];
    if (predictions[i] == truth[i]) ++correct[truth[i]];
  }
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (total[c] == 0) {
      if (warn) *warn << "warning: class " << c << " has no samples; excluded from ACA\n";
      continue;
    }
    sum += static_cast<double>(correct[c]) / static_cast<double>(total[c]);
    ++present;
  }
  if (present == 0) throw std::invalid_argument("compute_aca: no classes with samples");
  return 100.0 * sum / static_cast<double>(present);
}

/// ACA of a classifier on a dataset. OOD samples have no valid class and are
/// left out; InDistNoisy samples are scored against their true label.
inline double evaluate_aca(const ClassifierState<double>& h, const Dataset& d) {
  std::vector<std::size_t> pred, truth;
  for (const auto& s : d.samples()) {
    if (s.truth.is_out_dist()) continue;
    pred.push_back(predict(h, s.input));
    truth.push_back(s.true_class());
  }
  return compute_aca(pred, truth, d.num_classes());
}

struct PrecisionRecall {
  double precision = kMissing;
  double recall = kMissing;
};

inline PrecisionRecall precision_recall(std::size_t hits, std::size_t predicted, std::size_t actual) {
  PrecisionRecall pr;
  if (predicted > 0) pr.precision = static_cast<double>(hits) / static_cast<double>(predicted);
  if (actual > 0) pr.recall = static_cast<double>(hits) / static_cast<double>(actual);
  return pr;
}

struct SelectionMetrics {
  PrecisionRecall clean;     // loss-split clean set vs Clean, over all split samples
  PrecisionRecall in_dist;   // selected set vs InDistNoisy, within the noisy set
  PrecisionRecall out_dist;  // discarded set vs OutOfDist, within the noisy set
  double out_dist_base_rate = kMissing;  // OutOfDist share of the noisy set
  double in_dist_base_rate = kMissing;   // InDistNoisy share of the noisy set
};

using TagIndex = std::unordered_map<std::size_t, const Sample*>;

inline TagIndex index_by_id(const Dataset& d) {
  TagIndex idx;
  idx.reserve(d.size());
  for (const auto& s : d.samples()) idx.emplace(s.id, &s);
  return idx;
}

inline const Sample& lookup(const TagIndex& idx, std::size_t id) {
  const auto it = idx.find(id);
  if (it == idx.end()) throw std::invalid_argument("selection metrics: unknown sample id " + std::to_string(id));
  return *it->second;
}

/// Precision/recall of each routing decision of one epoch against the tags.
inline SelectionMetrics selection_metrics(const EpochSelection& sel, const TagIndex& tags) {
  const auto count_kind = [&](const std::vector<std::size_t>& ids, NoiseKind kind) {
    std::size_t n = 0;
    for (auto id : ids) n += lookup(tags, id).truth.kind() == kind;
    return n;
  };
  SelectionMetrics m;
  const std::size_t clean_in_clean = count_kind(sel.clean_ids, NoiseKind::clean);
  const std::size_t clean_total = clean_in_clean + count_kind(sel.noisy_ids, NoiseKind::clean);
  m.clean = precision_recall(clean_in_clean, sel.clean_ids.size(), clean_total);

  const std::size_t in_noisy = count_kind(sel.noisy_ids, NoiseKind::in_dist);
  const std::size_t out_noisy = count_kind(sel.noisy_ids, NoiseKind::out_dist);
  m.in_dist = precision_recall(count_kind(sel.selected_ids, NoiseKind::in_dist), sel.selected_ids.size(), in_noisy);
  m.out_dist = precision_recall(count_kind(sel.discarded_ids, NoiseKind::out_dist), sel.discarded_ids.size(), out_noisy);
  if (!sel.noisy_ids.empty()) {
    m.in_dist_base_rate = static_cast<double>(in_noisy) / static_cast<double>(sel.noisy_ids.size());
    m.out_dist_base_rate = static_cast<double>(out_noisy) / static_cast<double>(sel.noisy_ids.size());
  }
  return m;
}

struct RelabelAccuracy {
  double overall = kMissing;           // OOD selections count as wrong
  double in_dist = kMissing;           // pseudo label vs true label, InDistNoisy selections only
  double observed_in_dist = kMissing;  // observed label vs true label, same samples
  std::size_t in_dist_selected = 0;
};

inline RelabelAccuracy relabel_accuracy(const EpochSelection& sel, const TagIndex& tags) {
  RelabelAccuracy r;
  std::size_t correct = 0, in_correct = 0, observed_correct = 0;
  for (std::size_t i = 0; i < sel.selected_ids.size(); ++i) {
    const auto& s = lookup(tags, sel.selected_ids[i]);
    if (s.truth.is_out_dist()) continue;
    const bool ok = sel.pseudo_labels[i] == s.true_class();
    correct += ok;
    if (s.truth.is_in_dist()) {
      ++r.in_dist_selected;
      in_correct += ok;
      observed_correct += s.observed_label == s.true_class();
    }
  }
  if (!sel.selected_ids.empty()) r.overall = static_cast<double>(correct) / static_cast<double>(sel.selected_ids.size());
  if (r.in_dist_selected > 0) {
    r.in_dist = static_cast<double>(in_correct) / static_cast<double>(r.in_dist_selected);
    r.observed_in_dist = static_cast<double>(observed_correct) / static_cast<double>(r.in_dist_selected);
  }
  return r;
}

/// Mean loss and mean P_in per noise kind over a whole dataset.
struct StratifiedStats {
  double loss[3] = {kMissing, kMissing, kMissing};
  double pin[3] = {kMissing, kMissing, kMissing};
  double loss_noisy = kMissing;
};

inline StratifiedStats stratified_stats(const ModelState& m, const Dataset& d) {
  double loss_sum[3] = {0, 0, 0}, pin_sum[3] = {0, 0, 0};
  std::size_t n[3] = {0, 0, 0};
  for (const auto& s : d.samples()) {
    const auto k = static_cast<std::size_t>(s.truth.kind());
    const auto f = features(m.classifier, s.input);
    loss_sum[k] += per_sample_loss(m.classifier, s.input, s.observed_label);
    pin_sum[k] += score_in_distribution(m.selector, std::span<const double>(f));
    ++n[k];
  }
  StratifiedStats out;
  for (int k = 0; k < 3; ++k) {
    if (n[k] == 0) continue;
    out.loss[k] = loss_sum[k] / static_cast<double>(n[k]);
    out.pin[k] = pin_sum[k] / static_cast<double>(n[k]);
  }
  const std::size_t noisy = n[1] + n[2];
  if (noisy > 0) out.loss_noisy = (loss_sum[1] + loss_sum[2]) / static_cast<double>(noisy);
  return out;
}

/// Observer that fills every tag-dependent column of the epoch record.
/// Both datasets must outlive the returned callable.
inline EpochObserver make_tag_observer(const Dataset& train_set, const Dataset* test_set) {
  return [&train_set, test_set, tags = index_by_id(train_set)](const EpochContext& ctx, EpochRecord& rec) {
    if (test_set) rec.test_aca = evaluate_aca(ctx.model.classifier, *test_set);
    const auto st = stratified_stats(ctx.model, train_set);
    rec.loss_clean = st.loss[0];
    rec.loss_in_dist = st.loss[1];
    rec.loss_out_dist = st.loss[2];
    rec.loss_noisy = st.loss_noisy;
    rec.pin_clean = st.pin[0];
    rec.pin_in_dist = st.pin[1];
    rec.pin_out_dist = st.pin[2];
    if (!ctx.selection_active) return;
    const auto rel = relabel_accuracy(ctx.selection, tags);
    rec.relabel_acc = rel.overall;
    rec.relabel_acc_in_dist = rel.in_dist;
    rec.observed_acc_in_dist = rel.observed_in_dist;
    const auto sm = selection_metrics(ctx.selection, tags);
    rec.clean_precision = sm.clean.precision;
    rec.clean_recall = sm.clean.recall;
    rec.in_dist_precision = sm.in_dist.precision;
    rec.in_dist_recall = sm.in_dist.recall;
    rec.out_dist_precision = sm.out_dist.precision;
    rec.out_dist_recall = sm.out_dist.recall;
  };
}

}  // namespace metasel
