// The classifier h: input → affine → tanh → features → affine → logits.
//
// Parameters live in one flat vector (θ_h) so gradients, SGD steps, and the
// gradient inner products of the meta step are plain vector operations.
// Layout: [W1 (d_f×d_in, row-major) | b1 (d_f) | W2 (C×d_f, row-major) | b2 (C)].
// The first two blocks are the feature extractor, the last two the head.
#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "metasel/linalg.hpp"
#include "metasel/types.hpp"

namespace metasel {

struct ClassifierShape {
  std::size_t input_dim = 0;
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;

  std::size_t w1_offset() const { return 0; }
  std::size_t b1_offset() const { return feature_dim * input_dim; }
  std::size_t w2_offset() const { return b1_offset() + feature_dim; }
  std::size_t b2_offset() const { return w2_offset() + num_classes * feature_dim; }
  std::size_t feature_param_count() const { return w2_offset(); }
  std::size_t size() const { return b2_offset() + num_classes; }

  friend bool operator==(const ClassifierShape&, const ClassifierShape&) = default;
};

template <class T>
struct ClassifierState {
  ClassifierShape shape;
  Vec<T> params;

  ClassifierState() = default;
  explicit ClassifierState(ClassifierShape s) : shape(s), params(s.size(), T(0)) {}
  ClassifierState(ClassifierShape s, Vec<T> p) : shape(s), params(std::move(p)) {
    require_dim(params.size(), shape.size(), "ClassifierState");
  }

  std::span<const T> feature_params() const { return std::span<const T>(params).first(shape.feature_param_count()); }
  std::span<const T> head_params() const { return std::span<const T>(params).subspan(shape.feature_param_count()); }

  const T& w1(std::size_t f, std::size_t i) const { return params[shape.w1_offset() + f * shape.input_dim + i]; }
  const T& b1(std::size_t f) const { return params[shape.b1_offset() + f]; }
  const T& w2(std::size_t c, std::size_t f) const { return params[shape.w2_offset() + c * shape.feature_dim + f]; }
  const T& b2(std::size_t c) const { return params[shape.b2_offset() + c]; }

  friend bool operator==(const ClassifierState&, const ClassifierState&) = default;
};

/// Lifts double parameters into another scalar type (tangents zero for Dual).
template <class U>
ClassifierState<U> lift(const ClassifierState<double>& s) {
  Vec<U> p(s.params.begin(), s.params.end());
  return ClassifierState<U>(s.shape, std::move(p));
}

/// Glorot-uniform weights, zero biases.
template <class Rng>
ClassifierState<double> init_classifier(const ClassifierShape& shape, Rng& rng) {
  ClassifierState<double> s(shape);
  const double a1 = std::sqrt(6.0 / static_cast<double>(shape.input_dim + shape.feature_dim));
  const double a2 = std::sqrt(6.0 / static_cast<double>(shape.feature_dim + shape.num_classes));
  std::uniform_real_distribution<double> u1(-a1, a1), u2(-a2, a2);
  for (std::size_t k = 0; k < shape.feature_dim * shape.input_dim; ++k) s.params[shape.w1_offset() + k] = u1(rng);
  for (std::size_t k = 0; k < shape.num_classes * shape.feature_dim; ++k) s.params[shape.w2_offset() + k] = u2(rng);
  return s;
}

/// Training target: a class index, or a distribution over classes (soft pseudo labels).
struct Target {
  std::size_t label = 0;
  std::vector<double> distribution;  // empty for a hard target

  static Target hard(std::size_t y) { return {y, {}}; }
  static Target soft(std::vector<double> q) { return {0, std::move(q)}; }
  bool is_soft() const { return !distribution.empty(); }
};

struct RelabeledExample {
  Example example;
  Target target;
};

/// f(x): the feature layer's output.
template <class T>
Vec<T> features(const ClassifierState<T>& s, std::span<const double> x) {
  using std::tanh;
  require_dim(x.size(), s.shape.input_dim, "features");
  Vec<T> f(s.shape.feature_dim);
  for (std::size_t k = 0; k < s.shape.feature_dim; ++k) {
    T z = s.b1(k);
    for (std::size_t i = 0; i < s.shape.input_dim; ++i) z += s.w1(k, i) * x[i];
    f[k] = tanh(z);
  }
  return f;
}

template <class T, class F>
Vec<T> logits_from_features(const ClassifierState<T>& s, std::span<const F> f) {
  require_dim(f.size(), s.shape.feature_dim, "logits");
  Vec<T> z(s.shape.num_classes);
  for (std::size_t c = 0; c < s.shape.num_classes; ++c) {
    T acc = s.b2(c);
    for (std::size_t k = 0; k < s.shape.feature_dim; ++k) acc += s.w2(c, k) * f[k];
    z[c] = acc;
  }
  return z;
}

template <class T>
Vec<T> logits(const ClassifierState<T>& s, std::span<const double> x) {
  const auto f = features(s, x);
  return logits_from_features(s, std::span<const T>(f));
}

template <class T>
std::size_t predict(const ClassifierState<T>& s, std::span<const double> x) {
  const auto z = logits(s, x);
  return argmax(std::span<const T>(z));
}

/// Cross-entropy of softmax(z) against a hard or soft target, via log-sum-exp.
template <class T>
T cross_entropy(std::span<const T> z, const Target& t) {
  const T lse = log_sum_exp(z);
  if (!t.is_soft()) {
    if (t.label >= z.size()) throw std::invalid_argument("cross_entropy: invalid label " + std::to_string(t.label));
    return lse - z[t.label];
  }
  require_dim(t.distribution.size(), z.size(), "cross_entropy");
  T loss{};
  for (std::size_t c = 0; c < z.size(); ++c) loss += t.distribution[c] * (lse - z[c]);
  return loss;
}

template <class T>
T per_sample_loss(const ClassifierState<T>& s, std::span<const double> x, const Target& t) {
  const auto z = logits(s, x);
  return cross_entropy(std::span<const T>(z), t);
}

template <class T>
T per_sample_loss(const ClassifierState<T>& s, std::span<const double> x, std::size_t y) {
  if (y >= s.shape.num_classes) throw std::invalid_argument("per_sample_loss: invalid label " + std::to_string(y));
  return per_sample_loss(s, x, Target::hard(y));
}

/// grad += scale · ∇_θ L(x, t); returns L. Hand-written backprop.
template <class T>
T accumulate_loss_grad(const ClassifierState<T>& s, std::span<const double> x, const Target& t, T scale,
                       std::span<T> grad) {
  using std::exp;
  const auto& sh = s.shape;
  require_dim(grad.size(), sh.size(), "accumulate_loss_grad");
  const auto f = features(s, x);
  const auto z = logits_from_features(s, std::span<const T>(f));
  const T lse = log_sum_exp(std::span<const T>(z));
  const T loss = cross_entropy(std::span<const T>(z), t);

  // dL/dz = softmax(z) − target
  Vec<T> dz(sh.num_classes);
  for (std::size_t c = 0; c < sh.num_classes; ++c) {
    const T p = exp(z[c] - lse);
    const double q = t.is_soft() ? t.distribution[c] : (c == t.label ? 1.0 : 0.0);
    dz[c] = p - q;
  }
  Vec<T> df(sh.feature_dim, T(0));
  for (std::size_t c = 0; c < sh.num_classes; ++c) {
    const T g = scale * dz[c];
    grad[sh.b2_offset() + c] += g;
    for (std::size_t k = 0; k < sh.feature_dim; ++k) {
      grad[sh.w2_offset() + c * sh.feature_dim + k] += g * f[k];
      df[k] += dz[c] * s.w2(c, k);
    }
  }
  for (std::size_t k = 0; k < sh.feature_dim; ++k) {
    const T g = scale * df[k] * (T(1) - f[k] * f[k]);  // tanh' = 1 − tanh²
    grad[sh.b1_offset() + k] += g;
    for (std::size_t i = 0; i < sh.input_dim; ++i) grad[sh.w1_offset() + k * sh.input_dim + i] += g * x[i];
  }
  return loss;
}

/// ∇_θ L(x, y) for one sample.
template <class T>
Vec<T> per_sample_grad(const ClassifierState<T>& s, std::span<const double> x, std::size_t y) {
  if (y >= s.shape.num_classes) throw std::invalid_argument("per_sample_grad: invalid label " + std::to_string(y));
  Vec<T> g(s.shape.size(), T(0));
  accumulate_loss_grad(s, x, Target::hard(y), T(1), std::span<T>(g));
  return g;
}

/// ∇ of (1/|batch|) Σ_j w_j L(x_j, y_j). Weights may carry a different scalar
/// type than the state as long as they convert to it (e.g. Dual weights).
template <class T, class W>
Vec<T> weighted_grad(const ClassifierState<T>& s, const Batch& batch, std::span<const W> weights) {
  require_dim(weights.size(), batch.size(), "weighted_grad");
  Vec<T> g(s.shape.size(), T(0));
  if (batch.empty()) return g;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    if (!(primal(weights[j]) >= 0.0)) throw std::invalid_argument("weighted_grad: negative weight");
    if (batch[j].label >= s.shape.num_classes) throw std::invalid_argument("weighted_grad: invalid label");
    accumulate_loss_grad(s, batch[j].input, Target::hard(batch[j].label), T(weights[j]) * inv_n, std::span<T>(g));
  }
  return g;
}

template <class T>
Vec<T> weighted_grad(const ClassifierState<T>& s, const Batch& batch, const std::vector<double>& weights) {
  return weighted_grad(s, batch, std::span<const double>(weights));
}

/// Mean-loss gradient over the pooled clean and relabeled samples; the
/// denominator is |clean| + |relabeled|.
template <class T>
Vec<T> pooled_mean_grad(const ClassifierState<T>& s, const Batch& clean, const std::vector<RelabeledExample>& relabeled) {
  const std::size_t n = clean.size() + relabeled.size();
  if (n == 0) throw std::invalid_argument("pooled_mean_grad: both batches empty");
  Vec<T> g(s.shape.size(), T(0));
  const T inv_n = T(1.0 / static_cast<double>(n));
  for (const auto& e : clean) {
    if (e.label >= s.shape.num_classes) throw std::invalid_argument("pooled_mean_grad: invalid label");
    accumulate_loss_grad(s, e.input, Target::hard(e.label), inv_n, std::span<T>(g));
  }
  for (const auto& r : relabeled) accumulate_loss_grad(s, r.example.input, r.target, inv_n, std::span<T>(g));
  return g;
}

/// θ ← θ − α·g
template <class T>
ClassifierState<T> sgd_step(ClassifierState<T> s, std::span<const T> grad, double alpha) {
  require_dim(grad.size(), s.params.size(), "sgd_step");
  for (std::size_t k = 0; k < grad.size(); ++k) s.params[k] -= alpha * grad[k];
  return s;
}

/// One vanilla SGD step on the unweighted mean loss of the batch.
template <class T>
ClassifierState<T> warmup_step(const ClassifierState<T>& s, const Batch& batch, double alpha) {
  if (batch.empty()) throw std::invalid_argument("warmup_step: empty batch");
  const auto g = pooled_mean_grad(s, batch, {});
  return sgd_step(s, std::span<const T>(g), alpha);
}

/// One vanilla SGD step on the mean loss over clean ∪ relabeled, relabeled
/// samples scored against their pseudo labels.
template <class T>
ClassifierState<T> combined_step(const ClassifierState<T>& s, const Batch& clean,
                                 const std::vector<RelabeledExample>& relabeled, double alpha) {
  if (clean.empty() && relabeled.empty()) throw std::invalid_argument("combined_step: both batches empty");
  const auto g = pooled_mean_grad(s, clean, relabeled);
  return sgd_step(s, std::span<const T>(g), alpha);
}

/// Mean cross-entropy over a batch.
template <class T>
T mean_loss(const ClassifierState<T>& s, const Batch& batch) {
  if (batch.empty()) throw std::invalid_argument("mean_loss: empty batch");
  T acc{};
  for (const auto& e : batch) acc += per_sample_loss(s, e.input, e.label);
  return acc / static_cast<double>(batch.size());
}

}  // namespace metasel
