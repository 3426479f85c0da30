// Domain types shared across metasel: samples with hidden noise tags, datasets,
// the tag-free training view, and the run configuration.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace metasel {

enum class NoiseKind { clean, in_dist, out_dist };

/// Ground-truth provenance of a sample. Evaluation-only: training code never
/// sees it (see Example below).
class NoiseTag {
 public:
  static NoiseTag clean() { return NoiseTag(NoiseKind::clean, 0); }
  static NoiseTag in_dist(std::size_t true_label) { return NoiseTag(NoiseKind::in_dist, true_label); }
  static NoiseTag out_dist() { return NoiseTag(NoiseKind::out_dist, 0); }

  NoiseKind kind() const { return kind_; }
  bool is_clean() const { return kind_ == NoiseKind::clean; }
  bool is_in_dist() const { return kind_ == NoiseKind::in_dist; }
  bool is_out_dist() const { return kind_ == NoiseKind::out_dist; }

  /// True class for InDistNoisy samples.
  std::size_t true_label() const {
    if (kind_ != NoiseKind::in_dist) throw std::logic_error("true_label: tag is not InDistNoisy");
    return true_label_;
  }

  friend bool operator==(const NoiseTag&, const NoiseTag&) = default;

 private:
  NoiseTag(NoiseKind k, std::size_t t) : kind_(k), true_label_(t) {}
  NoiseKind kind_;
  std::size_t true_label_;
};

struct Sample {
  std::size_t id = 0;
  std::vector<double> input;
  std::size_t observed_label = 0;
  NoiseTag truth = NoiseTag::clean();

  /// Label a perfect annotator would give; only meaningful for non-OOD samples.
  std::size_t true_class() const {
    return truth.is_in_dist() ? truth.true_label() : observed_label;
  }

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// What training code is allowed to see of a sample: no noise tag.
/// The input span aliases the owning Dataset, which must outlive the view.
struct Example {
  std::size_t id = 0;
  std::span<const double> input;
  std::size_t label = 0;
};

using Batch = std::vector<Example>;

class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t num_classes, std::size_t input_dim, std::vector<Sample> samples = {})
      : num_classes_(num_classes), input_dim_(input_dim), samples_(std::move(samples)) {
    validate();
  }

  std::size_t num_classes() const { return num_classes_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const std::vector<Sample>& samples() const { return samples_; }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }

  /// Tag-free view for training. Invalidated if this Dataset is destroyed.
  Batch examples() const {
    Batch out;
    out.reserve(samples_.size());
    for (const auto& s : samples_) out.push_back({s.id, s.input, s.observed_label});
    return out;
  }

  bool all_clean() const {
    return std::all_of(samples_.begin(), samples_.end(), [](const Sample& s) { return s.truth.is_clean(); });
  }

  std::size_t count(NoiseKind kind) const {
    return static_cast<std::size_t>(std::count_if(samples_.begin(), samples_.end(),
                                                  [kind](const Sample& s) { return s.truth.kind() == kind; }));
  }

  std::size_t max_id() const {
    std::size_t m = 0;
    for (const auto& s : samples_) m = std::max(m, s.id);
    return m;
  }

  /// Throws std::invalid_argument naming the first broken invariant.
  void validate() const {
    if (num_classes_ < 2) throw std::invalid_argument("dataset: num_classes must be >= 2");
    if (input_dim_ == 0) throw std::invalid_argument("dataset: input_dim must be >= 1");
    std::unordered_set<std::size_t> ids;
    for (const auto& s : samples_) {
      if (s.observed_label >= num_classes_) {
        throw std::invalid_argument("dataset: sample " + std::to_string(s.id) + " has label out of range");
      }
      if (s.input.size() != input_dim_) {
        throw std::invalid_argument("dataset: sample " + std::to_string(s.id) + " has wrong input dimension");
      }
      for (double v : s.input) {
        if (!std::isfinite(v)) {
          throw std::invalid_argument("dataset: sample " + std::to_string(s.id) + " has non-finite input");
        }
      }
      if (s.truth.is_in_dist()) {
        const auto t = s.truth.true_label();
        if (t >= num_classes_ || t == s.observed_label) {
          throw std::invalid_argument("dataset: sample " + std::to_string(s.id) + " has inconsistent noise tag");
        }
      }
      if (!ids.insert(s.id).second) {
        throw std::invalid_argument("dataset: duplicate sample id " + std::to_string(s.id));
      }
    }
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::size_t num_classes_ = 2;
  std::size_t input_dim_ = 1;
  std::vector<Sample> samples_;
};

/// Concatenate two datasets of the same geometry (ids must stay unique).
inline Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.num_classes() != b.num_classes() || a.input_dim() != b.input_dim()) {
    throw std::invalid_argument("concat: dataset geometry mismatch");
  }
  auto samples = a.samples();
  samples.insert(samples.end(), b.samples().begin(), b.samples().end());
  return Dataset(a.num_classes(), a.input_dim(), std::move(samples));
}

/// Same samples with every noise tag replaced by Clean and InDistNoisy
/// observed labels kept. Used to show that training never reads tags.
inline Dataset strip_tags(const Dataset& d) {
  auto samples = d.samples();
  for (auto& s : samples) s.truth = NoiseTag::clean();
  return Dataset(d.num_classes(), d.input_dim(), std::move(samples));
}

enum class PseudoLabelMode { hard, soft };

/// How the post-warmup θ_h update treats the loss-split noisy set.
enum class Method {
  full,          // selection net picks in-dist samples, labeling net relabels them
  discard_only,  // noisy set dropped entirely
  no_relabel,    // selected samples keep their observed labels
  self_correct,  // selected samples relabeled by the classifier's own argmax
  plain,         // unweighted SGD on everything, every epoch
};

inline std::string to_string(Method m) {
  switch (m) {
    case Method::full: return "full";
    case Method::discard_only: return "discard_only";
    case Method::no_relabel: return "no_relabel";
    case Method::self_correct: return "self_correct";
    case Method::plain: return "plain";
  }
  return "unknown";
}

inline Method parse_method(const std::string& s) {
  for (auto m : {Method::full, Method::discard_only, Method::no_relabel, Method::self_correct, Method::plain}) {
    if (to_string(m) == s) return m;
  }
  throw std::invalid_argument("unknown method '" + s + "'");
}

inline std::string to_string(PseudoLabelMode m) { return m == PseudoLabelMode::hard ? "hard" : "soft"; }

inline PseudoLabelMode parse_pseudo_label_mode(const std::string& s) {
  if (s == "hard") return PseudoLabelMode::hard;
  if (s == "soft") return PseudoLabelMode::soft;
  throw std::invalid_argument("unknown pseudo_label_mode '" + s + "'");
}

struct TrainConfig {
  double drop_rate = 0.35;          // τ
  double relabel_rate = 0.05;       // r
  std::size_t warmup_epochs = 5;    // T_s
  std::size_t total_epochs = 100;   // T_max
  std::size_t batch_size = 60;      // n
  std::size_t meta_batch_size = 10;
  double lr_classifier = 0.01;      // α, before cosine decay
  double lr_selection = 0.01;       // β
  double momentum = 0.0;            // θ_h optimizer only; the virtual step is always vanilla
  std::size_t num_classes = 2;      // C
  std::size_t feature_dim = 32;     // d_f
  std::size_t selection_hidden = 256;  // H
  std::uint64_t seed = 0;
  PseudoLabelMode pseudo_label_mode = PseudoLabelMode::hard;
  bool detach_features = true;
  bool meta_in_train = false;
};

/// Lists every violated invariant; empty iff the config is usable.
inline std::vector<std::string> validate_config(const TrainConfig& c) {
  std::vector<std::string> v;
  if (!(c.drop_rate >= 0.0)) v.emplace_back("drop_rate must be >= 0");
  if (!(c.drop_rate < 1.0)) v.emplace_back("drop_rate must be < 1");
  if (!(c.relabel_rate >= 0.0 && c.relabel_rate <= 1.0)) v.emplace_back("relabel_rate must be in [0, 1]");
  if (c.total_epochs == 0) v.emplace_back("total_epochs must be > 0");
  if (!(c.warmup_epochs < c.total_epochs)) v.emplace_back("warmup must precede total epochs");
  if (c.batch_size < 2) v.emplace_back("batch_size must be >= 2");
  if (c.meta_batch_size < 1) v.emplace_back("meta_batch_size must be >= 1");
  if (!(c.lr_classifier > 0.0) || !std::isfinite(c.lr_classifier)) v.emplace_back("lr_classifier must be > 0");
  if (!(c.lr_selection > 0.0) || !std::isfinite(c.lr_selection)) v.emplace_back("lr_selection must be > 0");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) v.emplace_back("momentum must be in [0, 1)");
  if (c.num_classes < 2) v.emplace_back("num_classes must be >= 2");
  if (c.feature_dim < 1) v.emplace_back("feature_dim must be >= 1");
  if (c.selection_hidden < 1) v.emplace_back("selection_hidden must be >= 1");
  return v;
}

}  // namespace metasel
