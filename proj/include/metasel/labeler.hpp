// The labeling net L_net: an affine head over classifier features, trained on
// the meta set, that supplies pseudo labels for selected noisy samples.
#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "metasel/classifier.hpp"
#include "metasel/linalg.hpp"
#include "metasel/types.hpp"

namespace metasel {

/// θ_l. Layout: [W (C×d_f, row-major) | b (C)].
struct LabelingNetParams {
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;
  Vec<double> params;

  LabelingNetParams() = default;
  LabelingNetParams(std::size_t d_f, std::size_t C) : feature_dim(d_f), num_classes(C), params((d_f + 1) * C, 0.0) {}
  LabelingNetParams(std::size_t d_f, std::size_t C, Vec<double> p)
      : feature_dim(d_f), num_classes(C), params(std::move(p)) {
    require_dim(params.size(), (d_f + 1) * C, "LabelingNetParams");
  }

  std::size_t bias_offset() const { return num_classes * feature_dim; }
  double& w(std::size_t c, std::size_t k) { return params[c * feature_dim + k]; }
  double w(std::size_t c, std::size_t k) const { return params[c * feature_dim + k]; }
  double& b(std::size_t c) { return params[bias_offset() + c]; }
  double b(std::size_t c) const { return params[bias_offset() + c]; }

  friend bool operator==(const LabelingNetParams&, const LabelingNetParams&) = default;
};

/// Same initialization as the classifier head it runs parallel to.
template <class Rng>
LabelingNetParams init_labeling_net(std::size_t d_f, std::size_t C, Rng& rng) {
  LabelingNetParams p(d_f, C);
  const double a = std::sqrt(6.0 / static_cast<double>(d_f + C));
  std::uniform_real_distribution<double> u(-a, a);
  for (std::size_t k = 0; k < C * d_f; ++k) p.params[k] = u(rng);
  return p;
}

inline Vec<double> labeler_logits(const LabelingNetParams& l, std::span<const double> f) {
  require_dim(f.size(), l.feature_dim, "pseudo_label");
  Vec<double> z(l.num_classes);
  for (std::size_t c = 0; c < l.num_classes; ++c) {
    double acc = l.b(c);
    for (std::size_t k = 0; k < l.feature_dim; ++k) acc += l.w(c, k) * f[k];
    z[c] = acc;
  }
  return z;
}

/// ŷ = L_net(f): argmax class (ties → lowest index) or the softmax distribution.
inline Target pseudo_label(const LabelingNetParams& l, std::span<const double> f, PseudoLabelMode mode = PseudoLabelMode::hard) {
  const auto z = labeler_logits(l, f);
  if (mode == PseudoLabelMode::hard) return Target::hard(argmax(std::span<const double>(z)));
  return Target::soft(softmax(std::span<const double>(z)));
}

/// Mean cross-entropy of L_net on precomputed features, and its gradient.
inline double labeler_loss_grad(const LabelingNetParams& l, const std::vector<Vec<double>>& feats,
                                const std::vector<std::size_t>& labels, Vec<double>* grad) {
  if (feats.empty()) throw std::invalid_argument("labeler: empty meta batch");
  require_dim(labels.size(), feats.size(), "labeler");
  if (grad) grad->assign(l.params.size(), 0.0);
  const double inv_m = 1.0 / static_cast<double>(feats.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    if (labels[i] >= l.num_classes) throw std::invalid_argument("labeler: invalid label");
    const auto z = labeler_logits(l, feats[i]);
    const auto p = softmax(std::span<const double>(z));
    loss += (log_sum_exp(std::span<const double>(z)) - z[labels[i]]) * inv_m;
    if (!grad) continue;
    for (std::size_t c = 0; c < l.num_classes; ++c) {
      const double dz = (p[c] - (c == labels[i] ? 1.0 : 0.0)) * inv_m;
      (*grad)[l.bias_offset() + c] += dz;
      for (std::size_t k = 0; k < l.feature_dim; ++k) (*grad)[c * l.feature_dim + k] += dz * feats[i][k];
    }
  }
  return loss;
}

/// One SGD step of θ_l on the meta batch. Features come from the current
/// classifier and are constants here; `h` is only read.
inline LabelingNetParams labeler_update(LabelingNetParams l, const Batch& meta_batch, const ClassifierState<double>& h,
                                        double alpha) {
  if (meta_batch.empty()) throw std::invalid_argument("labeler_update: empty meta batch");
  std::vector<Vec<double>> feats;
  std::vector<std::size_t> labels;
  for (const auto& e : meta_batch) {
    feats.push_back(features(h, e.input));
    labels.push_back(e.label);
  }
  Vec<double> g;
  labeler_loss_grad(l, feats, labels, &g);
  for (std::size_t k = 0; k < g.size(); ++k) l.params[k] -= alpha * g[k];
  return l;
}

/// Gradient of L_net's mean meta cross-entropy with respect to θ_h's feature
/// extractor (head block left zero). Only used when features are not detached.
inline Vec<double> labeler_feature_grad(const LabelingNetParams& l, const Batch& meta_batch,
                                        const ClassifierState<double>& h) {
  if (meta_batch.empty()) throw std::invalid_argument("labeler_feature_grad: empty meta batch");
  const auto& sh = h.shape;
  Vec<double> g(sh.size(), 0.0);
  const double inv_m = 1.0 / static_cast<double>(meta_batch.size());
  for (const auto& e : meta_batch) {
    const auto f = features(h, e.input);
    const auto z = labeler_logits(l, f);
    const auto p = softmax(std::span<const double>(z));
    for (std::size_t k = 0; k < sh.feature_dim; ++k) {
      double df = 0.0;
      for (std::size_t c = 0; c < l.num_classes; ++c) df += (p[c] - (c == e.label ? 1.0 : 0.0)) * l.w(c, k);
      const double dz = inv_m * df * (1.0 - f[k] * f[k]);
      g[sh.b1_offset() + k] += dz;
      for (std::size_t i = 0; i < sh.input_dim; ++i) g[sh.w1_offset() + k * sh.input_dim + i] += dz * e.input[i];
    }
  }
  return g;
}

}  // namespace metasel
