// The end-to-end training loop.
//
// Per mini-batch, in this order:
//   1. draw a batch from the training set and a meta batch from the meta set;
//   2. meta-update θ_s through the virtual step at the current θ_h, then
//      update θ_l on the meta batch;
//   3. during warmup (epoch ≤ T_s) take a plain SGD step on θ_h; afterwards
//      split by loss, score and select the noisy set, pseudo-label the
//      selection and step θ_h on clean ∪ relabeled.
//
// The loop sees only Examples (no noise tags). Tag-aware statistics are
// filled in by an optional EpochObserver (see metrics.hpp).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "metasel/classifier.hpp"
#include "metasel/labeler.hpp"
#include "metasel/schedule.hpp"
#include "metasel/selector.hpp"
#include "metasel/splitter.hpp"
#include "metasel/types.hpp"

namespace metasel {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelState {
  ClassifierState<double> classifier;
  SelectionNetParams<double> selector;
  LabelingNetParams labeler;

  friend bool operator==(const ModelState&, const ModelState&) = default;
};

inline ModelState init_model(std::size_t input_dim, const TrainConfig& c) {
  std::mt19937_64 rng(c.seed ^ 0x9e3779b97f4a7c15ULL);
  ModelState m;
  m.classifier = init_classifier(ClassifierShape{input_dim, c.feature_dim, c.num_classes}, rng);
  m.selector = init_selection_net(SelectionNetShape{c.feature_dim, c.selection_hidden}, rng);
  m.labeler = init_labeling_net(c.feature_dim, c.num_classes, rng);
  return m;
}

/// Ids routed through each stage during one epoch (post-warmup batches only).
struct EpochSelection {
  std::vector<std::size_t> clean_ids;
  std::vector<std::size_t> noisy_ids;
  std::vector<std::size_t> selected_ids;
  std::vector<std::size_t> pseudo_labels;  // hard label per selected id (argmax for soft targets)
  std::vector<std::size_t> discarded_ids;
};

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double alpha = 0.0;
  double mean_train_loss = 0.0;  // over every sample seen, at the pre-update θ_h
  std::size_t samples_seen = 0;
  std::size_t clean_count = 0;
  std::size_t noisy_count = 0;
  std::size_t in_dist_count = 0;

  // Filled by an observer with access to noise tags and a test set.
  double test_aca = kMissing;
  double loss_clean = kMissing, loss_in_dist = kMissing, loss_out_dist = kMissing, loss_noisy = kMissing;
  double pin_clean = kMissing, pin_in_dist = kMissing, pin_out_dist = kMissing;
  double relabel_acc = kMissing;          // OOD members of the selection count as errors
  double relabel_acc_in_dist = kMissing;  // InDistNoisy members of the selection only
  double observed_acc_in_dist = kMissing; // same members, scored by their observed labels
  double clean_precision = kMissing, clean_recall = kMissing;
  double in_dist_precision = kMissing, in_dist_recall = kMissing;
  double out_dist_precision = kMissing, out_dist_recall = kMissing;
};

struct TrainLog {
  Method method = Method::full;
  std::vector<EpochRecord> epochs;
};

struct EpochContext {
  std::size_t epoch;
  const ModelState& model;
  const EpochSelection& selection;
  bool selection_active;  // false during warmup and for Method::plain
};

using EpochObserver = std::function<void(const EpochContext&, EpochRecord&)>;
using StepObserver = std::function<void(std::size_t epoch, std::size_t iteration, const ModelState&)>;

struct TrainResult {
  ModelState model;
  TrainLog log;
};

/// Config checks for a training run. Identical to validate_config except that
/// T_s == T_max is allowed: that is a pure-warmup run.
inline std::vector<std::string> training_violations(const TrainConfig& c) {
  auto v = validate_config(c);
  if (c.warmup_epochs == c.total_epochs) {
    std::erase(v, std::string("warmup must precede total epochs"));
  }
  return v;
}

namespace detail {

inline void require_finite(const ModelState& m, const char* step, std::size_t epoch, std::size_t iter) {
  const auto fail = [&](const char* what) {
    throw TrainingError(std::string("non-finite ") + what + " after " + step + " (epoch " + std::to_string(epoch) +
                        ", iteration " + std::to_string(iter) + ")");
  };
  if (!all_finite(std::span<const double>(m.classifier.params))) fail("classifier parameters");
  if (!all_finite(std::span<const double>(m.selector.params))) fail("selection net parameters");
  if (!all_finite(std::span<const double>(m.labeler.params))) fail("labeling net parameters");
}

/// Uniform with replacement; class-balanced (round-robin over classes) when
/// the meta batch has room for every class.
class MetaSampler {
 public:
  MetaSampler(const Batch& meta, std::size_t num_classes) : meta_(meta), by_class_(num_classes) {
    for (std::size_t i = 0; i < meta.size(); ++i) by_class_.at(meta[i].label).push_back(i);
    balanced_ = std::all_of(by_class_.begin(), by_class_.end(), [](const auto& v) { return !v.empty(); });
  }

  Batch sample(std::size_t size, std::mt19937_64& rng) const {
    Batch out;
    out.reserve(size);
    const std::size_t C = by_class_.size();
    if (balanced_ && size >= C) {
      for (std::size_t i = 0; i < size; ++i) {
        const auto& pool = by_class_[i % C];
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        out.push_back(meta_[pool[pick(rng)]]);
      }
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, meta_.size() - 1);
      for (std::size_t i = 0; i < size; ++i) out.push_back(meta_[pick(rng)]);
    }
    return out;
  }

 private:
  const Batch& meta_;
  std::vector<std::vector<std::size_t>> by_class_;
  bool balanced_ = false;
};

}  // namespace detail

/// Batches shorter than this at the end of an epoch are skipped.
inline constexpr std::size_t kMinTailBatch = 4;

/// Runs the full loop on tag-free views. `train_set` and `meta_set` must
/// outlive the call.
inline TrainResult train(const TrainConfig& config, const Batch& train_set, const Batch& meta_set, ModelState model,
                         Method method = Method::full, const EpochObserver& on_epoch = {},
                         const StepObserver& on_step = {}) {
  if (auto v = training_violations(config); !v.empty()) throw std::invalid_argument("train: " + v.front());
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  if (meta_set.empty()) throw std::invalid_argument("train: empty meta set");
  if (model.classifier.shape.num_classes != config.num_classes) throw std::invalid_argument("train: class count mismatch");
  if (model.selector.shape.feature_dim != model.classifier.shape.feature_dim ||
      model.labeler.feature_dim != model.classifier.shape.feature_dim) {
    throw std::invalid_argument("train: feature width mismatch between networks");
  }

  std::mt19937_64 rng(config.seed);
  const detail::MetaSampler meta_sampler(meta_set, config.num_classes);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> velocity;
  if (config.momentum > 0.0) velocity.assign(model.classifier.params.size(), 0.0);

  const auto step_classifier = [&](const Batch& clean, const std::vector<RelabeledExample>& relabeled, double alpha) {
    if (config.momentum == 0.0) {
      model.classifier = combined_step(model.classifier, clean, relabeled, alpha);
      return;
    }
    const auto g = pooled_mean_grad(model.classifier, clean, relabeled);
    for (std::size_t k = 0; k < g.size(); ++k) velocity[k] = config.momentum * velocity[k] + g[k];
    model.classifier = sgd_step(model.classifier, std::span<const double>(velocity), alpha);
  };

  TrainResult result;
  result.log.method = method;
  for (std::size_t epoch = 1; epoch <= config.total_epochs; ++epoch) {
    const double alpha = lr_schedule(static_cast<double>(epoch - 1), static_cast<double>(config.total_epochs),
                                     config.lr_classifier);
    const bool warmup = epoch <= config.warmup_epochs || method == Method::plain;
    std::shuffle(order.begin(), order.end(), rng);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.alpha = alpha;
    EpochSelection sel;
    double loss_sum = 0.0;

    std::size_t iter = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      if (end - start < std::min(config.batch_size, kMinTailBatch)) break;
      ++iter;
      Batch batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_set[order[i]]);
      const Batch meta_batch = meta_sampler.sample(config.meta_batch_size, rng);

      // θ_s and θ_l, both against the pre-update θ_h.
      const auto mg = meta_gradient(model.classifier, model.selector, batch, meta_batch, alpha);
      model.selector = meta_update(std::move(model.selector), mg.gradient, config.lr_selection);
      auto next_labeler = labeler_update(model.labeler, meta_batch, model.classifier, alpha);
      if (!config.detach_features) {
        const auto g = labeler_feature_grad(model.labeler, meta_batch, model.classifier);
        model.classifier = sgd_step(model.classifier, std::span<const double>(g), alpha);
      }
      model.labeler = std::move(next_labeler);
      detail::require_finite(model, "selection/labeling update", epoch, iter);

      std::vector<double> losses;
      losses.reserve(batch.size());
      std::vector<std::size_t> ids;
      ids.reserve(batch.size());
      for (const auto& e : batch) {
        losses.push_back(per_sample_loss(model.classifier, e.input, e.label));
        ids.push_back(e.id);
      }
      for (double l : losses) loss_sum += l;
      rec.samples_seen += batch.size();

      if (warmup) {
        if (config.momentum == 0.0) {
          model.classifier = warmup_step(model.classifier, batch, alpha);
        } else {
          step_classifier(batch, {}, alpha);
        }
        rec.clean_count += batch.size();
        detail::require_finite(model, "warmup step", epoch, iter);
      } else {
        const auto split = split_indices(losses, ids, config.drop_rate);
        Batch clean, noisy;
        for (auto i : split.clean) clean.push_back(batch[i]);
        for (auto i : split.noisy) noisy.push_back(batch[i]);
        rec.clean_count += clean.size();
        rec.noisy_count += noisy.size();
        for (const auto& e : clean) sel.clean_ids.push_back(e.id);
        for (const auto& e : noisy) sel.noisy_ids.push_back(e.id);

        std::vector<RelabeledExample> relabeled;
        if (method == Method::discard_only) {
          for (const auto& e : noisy) sel.discarded_ids.push_back(e.id);
        } else if (!noisy.empty()) {
          const auto feats = batch_features(model.classifier, noisy);
          const auto chosen = select_in_distribution(model.selector, noisy, feats, config.relabel_rate);
          for (auto j : chosen.selected) {
            const auto& e = noisy[j];
            Target t;
            switch (method) {
              case Method::full:
                t = pseudo_label(model.labeler, feats[j], config.pseudo_label_mode);
                break;
              case Method::no_relabel:
                t = Target::hard(e.label);
                break;
              case Method::self_correct: {
                const auto z = logits(model.classifier, e.input);
                t = config.pseudo_label_mode == PseudoLabelMode::hard
                        ? Target::hard(argmax(std::span<const double>(z)))
                        : Target::soft(softmax(std::span<const double>(z)));
                break;
              }
              default:
                break;
            }
            sel.selected_ids.push_back(e.id);
            sel.pseudo_labels.push_back(t.is_soft() ? argmax(std::span<const double>(t.distribution)) : t.label);
            relabeled.push_back({e, std::move(t)});
          }
          for (auto j : chosen.discarded) sel.discarded_ids.push_back(noisy[j].id);
        }
        rec.in_dist_count += relabeled.size();
        step_classifier(clean, relabeled, alpha);
        detail::require_finite(model, "combined step", epoch, iter);
      }
      if (on_step) on_step(epoch, iter, model);
    }
    rec.mean_train_loss = rec.samples_seen ? loss_sum / static_cast<double>(rec.samples_seen) : kMissing;
    if (on_epoch) on_epoch(EpochContext{epoch, model, sel, !warmup}, rec);
    result.log.epochs.push_back(rec);
  }
  result.model = std::move(model);
  return result;
}

/// Dataset-level entry point: checks the meta-set contract, then trains on
/// tag-free views.
inline TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& meta_set, ModelState model,
                         Method method = Method::full, const EpochObserver& on_epoch = {},
                         const StepObserver& on_step = {}) {
  if (!meta_set.all_clean()) throw std::invalid_argument("train: meta set must contain only clean samples");
  if (meta_set.size() * 5 > train_set.size()) throw std::invalid_argument("train: meta set must satisfy M <= N/5");
  if (train_set.num_classes() != config.num_classes || meta_set.num_classes() != config.num_classes) {
    throw std::invalid_argument("train: dataset class count does not match config");
  }
  if (train_set.input_dim() != model.classifier.shape.input_dim || meta_set.input_dim() != model.classifier.shape.input_dim) {
    throw std::invalid_argument("train: dataset input dimension does not match model");
  }
  const Batch train_view = train_set.examples();
  const Batch meta_view = meta_set.examples();
  return train(config, train_view, meta_view, std::move(model), method, on_epoch, on_step);
}

}  // namespace metasel
