// The selection net S_net and its one-step-lookahead meta training.
//
// S_net(f) = σ(vᵀ relu(W f + b) + c) scores how likely a sample is
// in-distribution from its (detached) classifier features. It is trained by
// differentiating the meta-set loss through a virtual SGD step of the
// classifier in which every batch sample is weighted by its score:
//
//   θ̂_h(θ_s) = θ_h − (α/n) Σ_j S_net(f_j; θ_s) ∇L_j(θ_h)
//   ∇_θs L_meta(θ̂_h) = −(α/n) Σ_j ( (1/m) Σ_i T_ij ) ∂S_net(f_j)/∂θ_s
//   T_ij = ⟨∇L^meta_i(θ̂_h), ∇L_j(θ_h)⟩
//
// meta_gradient() evaluates the closed form; meta_gradient_autodiff()
// pushes forward-mode duals through virtual_step() and the meta loss instead.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "metasel/classifier.hpp"
#include "metasel/dual.hpp"
#include "metasel/linalg.hpp"
#include "metasel/splitter.hpp"
#include "metasel/types.hpp"

namespace metasel {

struct SelectionNetShape {
  std::size_t feature_dim = 0;
  std::size_t hidden = 256;

  std::size_t w_offset() const { return 0; }
  std::size_t b_offset() const { return hidden * feature_dim; }
  std::size_t v_offset() const { return b_offset() + hidden; }
  std::size_t c_offset() const { return v_offset() + hidden; }
  std::size_t size() const { return c_offset() + 1; }

  friend bool operator==(const SelectionNetShape&, const SelectionNetShape&) = default;
};

/// θ_s. Layout: [W (H×d_f, row-major) | b (H) | v (H) | c].
template <class T>
struct SelectionNetParams {
  SelectionNetShape shape;
  Vec<T> params;

  SelectionNetParams() = default;
  explicit SelectionNetParams(SelectionNetShape s) : shape(s), params(s.size(), T(0)) {
    if (s.hidden < 1) throw std::invalid_argument("SelectionNetParams: hidden width must be >= 1");
  }
  SelectionNetParams(SelectionNetShape s, Vec<T> p) : shape(s), params(std::move(p)) {
    if (s.hidden < 1) throw std::invalid_argument("SelectionNetParams: hidden width must be >= 1");
    require_dim(params.size(), shape.size(), "SelectionNetParams");
  }

  const T& w(std::size_t h, std::size_t k) const { return params[shape.w_offset() + h * shape.feature_dim + k]; }
  const T& b(std::size_t h) const { return params[shape.b_offset() + h]; }
  const T& v(std::size_t h) const { return params[shape.v_offset() + h]; }
  const T& c() const { return params[shape.c_offset()]; }

  friend bool operator==(const SelectionNetParams&, const SelectionNetParams&) = default;
};

/// Fan-in scaled uniform hidden layer, output weights shrunk by 10× and a zero
/// output bias so that initial scores sit close to 0.5.
template <class Rng>
SelectionNetParams<double> init_selection_net(const SelectionNetShape& shape, Rng& rng) {
  SelectionNetParams<double> s(shape);
  const double a = 1.0 / std::sqrt(static_cast<double>(shape.feature_dim));
  const double a_out = 0.1 / std::sqrt(static_cast<double>(shape.hidden));
  std::uniform_real_distribution<double> u(-a, a), u_out(-a_out, a_out);
  for (std::size_t k = 0; k < shape.hidden * shape.feature_dim; ++k) s.params[shape.w_offset() + k] = u(rng);
  for (std::size_t h = 0; h < shape.hidden; ++h) s.params[shape.b_offset() + h] = u(rng);
  for (std::size_t h = 0; h < shape.hidden; ++h) s.params[shape.v_offset() + h] = u_out(rng);
  return s;
}

template <class T>
T sigmoid(const T& z) {
  using std::exp;
  // Branch on sign so exp never overflows.
  if (primal(z) >= 0.0) return T(1) / (T(1) + exp(-z));
  const T e = exp(z);
  return e / (T(1) + e);
}

/// Hidden-layer pre-activations W f + b.
template <class T, class F>
Vec<T> selection_preactivations(const SelectionNetParams<T>& s, std::span<const F> f) {
  require_dim(f.size(), s.shape.feature_dim, "score_in_distribution");
  Vec<T> z(s.shape.hidden);
  for (std::size_t h = 0; h < s.shape.hidden; ++h) {
    T acc = s.b(h);
    for (std::size_t k = 0; k < s.shape.feature_dim; ++k) acc += s.w(h, k) * f[k];
    z[h] = acc;
  }
  return z;
}

/// P_in = S_net(f; θ_s) ∈ (0, 1).
template <class T, class F>
T score_in_distribution(const SelectionNetParams<T>& s, std::span<const F> f) {
  const auto z = selection_preactivations(s, f);
  T out = s.c();
  for (std::size_t h = 0; h < s.shape.hidden; ++h) {
    if (primal(z[h]) > 0.0) out += s.v(h) * z[h];
  }
  return sigmoid(out);
}

template <class T>
T score_in_distribution(const SelectionNetParams<T>& s, const Vec<double>& f) {
  return score_in_distribution(s, std::span<const double>(f));
}

/// ∂S_net(f; θ_s)/∂θ_s, laid out like θ_s. Returns the score in `score_out`.
inline Vec<double> score_gradient(const SelectionNetParams<double>& s, std::span<const double> f,
                                  double* score_out = nullptr) {
  const auto& sh = s.shape;
  const auto z = selection_preactivations(s, f);
  double out = s.c();
  for (std::size_t h = 0; h < sh.hidden; ++h) {
    if (z[h] > 0.0) out += s.v(h) * z[h];
  }
  const double p = sigmoid(out);
  if (score_out) *score_out = p;
  const double dp = p * (1.0 - p);
  Vec<double> g(sh.size(), 0.0);
  g[sh.c_offset()] = dp;
  for (std::size_t h = 0; h < sh.hidden; ++h) {
    if (!(z[h] > 0.0)) continue;
    g[sh.v_offset() + h] = dp * z[h];
    const double dz = dp * s.v(h);
    g[sh.b_offset() + h] = dz;
    for (std::size_t k = 0; k < sh.feature_dim; ++k) g[sh.w_offset() + h * sh.feature_dim + k] = dz * f[k];
  }
  return g;
}

/// Detached features of every batch member under θ_h.
inline std::vector<Vec<double>> batch_features(const ClassifierState<double>& h, const Batch& batch) {
  std::vector<Vec<double>> out;
  out.reserve(batch.size());
  for (const auto& e : batch) out.push_back(features(h, e.input));
  return out;
}

/// θ̂_h(θ_s): one vanilla SGD step of θ_h with every batch sample weighted by
/// its score. θ_h is taken by const reference and never modified.
template <class T>
ClassifierState<T> virtual_step(const ClassifierState<double>& h, const SelectionNetParams<T>& s, const Batch& batch,
                                double alpha) {
  if (batch.empty()) throw std::invalid_argument("virtual_step: empty batch");
  require_dim(s.shape.feature_dim, h.shape.feature_dim, "virtual_step");
  Vec<T> weights;
  weights.reserve(batch.size());
  for (const auto& e : batch) {
    const auto f = features(h, e.input);
    weights.push_back(score_in_distribution(s, std::span<const double>(f)));
  }
  const auto lifted = lift<T>(h);
  const auto g = weighted_grad(lifted, batch, std::span<const T>(weights));
  return sgd_step(lifted, std::span<const T>(g), alpha);
}

/// Mean loss of the meta batch under classifier parameters `h`.
template <class T>
T meta_loss(const ClassifierState<T>& h, const Batch& meta_batch) {
  if (meta_batch.empty()) throw std::invalid_argument("meta_loss: empty meta batch");
  return mean_loss(h, meta_batch);
}

struct MetaGradient {
  Vec<double> gradient;              // ∇_θs of the meta loss, laid out like θ_s
  Vec<double> similarity;            // (1/m) Σ_i T_ij for each batch position j
  Vec<double> scores;                // S_net(f_j) for each batch position j
  ClassifierState<double> lookahead; // θ̂_h(θ_s)
  double meta_loss = 0.0;            // meta loss at θ̂_h
};

/// Closed-form meta-gradient.
inline MetaGradient meta_gradient(const ClassifierState<double>& h, const SelectionNetParams<double>& s,
                                  const Batch& batch, const Batch& meta_batch, double alpha) {
  if (batch.empty()) throw std::invalid_argument("meta_gradient: empty batch");
  if (meta_batch.empty()) throw std::invalid_argument("meta_gradient: empty meta batch");
  const std::size_t n = batch.size();
  const std::size_t P = h.shape.size();

  // Per-sample training gradients at θ_h and their scores.
  std::vector<Vec<double>> train_grads;
  train_grads.reserve(n);
  MetaGradient out;
  out.scores.reserve(n);
  Vec<double> weighted(P, 0.0);
  for (const auto& e : batch) {
    train_grads.push_back(per_sample_grad(h, e.input, e.label));
    const auto f = features(h, e.input);
    out.scores.push_back(score_in_distribution(s, std::span<const double>(f)));
    axpy(out.scores.back() / static_cast<double>(n), std::span<const double>(train_grads.back()),
         std::span<double>(weighted));
  }
  out.lookahead = sgd_step(h, std::span<const double>(weighted), alpha);

  // Mean meta gradient at θ̂_h: ḡ = (1/m) Σ_i ∇L^meta_i(θ̂_h).
  Vec<double> meta_mean(P, 0.0);
  const double inv_m = 1.0 / static_cast<double>(meta_batch.size());
  double loss = 0.0;
  for (const auto& e : meta_batch) {
    loss += accumulate_loss_grad(out.lookahead, e.input, Target::hard(e.label), inv_m, std::span<double>(meta_mean));
  }
  out.meta_loss = loss * inv_m;

  // (1/m) Σ_i T_ij = ⟨ḡ, ∇L_j(θ_h)⟩ by linearity.
  out.gradient.assign(s.shape.size(), 0.0);
  out.similarity.reserve(n);
  const double coef = -alpha / static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double t_bar = dot(meta_mean, train_grads[j]);
    out.similarity.push_back(t_bar);
    const auto f = features(h, batch[j].input);
    const auto ds = score_gradient(s, f);
    axpy(coef * t_bar, std::span<const double>(ds), std::span<double>(out.gradient));
  }
  return out;
}

/// The same gradient obtained by forward-mode differentiation of
/// meta_loss(virtual_step(θ_s)), one θ_s coordinate at a time.
inline Vec<double> meta_gradient_autodiff(const ClassifierState<double>& h, const SelectionNetParams<double>& s,
                                          const Batch& batch, const Batch& meta_batch, double alpha) {
  if (batch.empty() || meta_batch.empty()) throw std::invalid_argument("meta_gradient_autodiff: empty batch");
  using D = Dual<double>;
  SelectionNetParams<D> sd(s.shape, Vec<D>(s.params.begin(), s.params.end()));
  Vec<double> grad(s.params.size());
  for (std::size_t k = 0; k < s.params.size(); ++k) {
    sd.params[k].tangent = 1.0;
    const auto lookahead = virtual_step(h, sd, batch, alpha);
    grad[k] = meta_loss(lookahead, meta_batch).tangent;
    sd.params[k].tangent = 0.0;
  }
  return grad;
}

/// θ_s ← θ_s − β·g
inline SelectionNetParams<double> meta_update(SelectionNetParams<double> s, std::span<const double> gradient, double beta) {
  require_dim(gradient.size(), s.params.size(), "meta_update");
  for (std::size_t k = 0; k < gradient.size(); ++k) s.params[k] -= beta * gradient[k];
  return s;
}

/// floor(r·m): how many of m noisy samples are kept as in-distribution.
inline std::size_t in_dist_count(std::size_t m, double relabel_rate) {
  if (!(relabel_rate >= 0.0 && relabel_rate <= 1.0)) throw std::invalid_argument("select: relabel_rate must be in [0, 1]");
  const double k = std::floor(relabel_rate * static_cast<double>(m) + kCountSlack);
  return std::min(m, static_cast<std::size_t>(std::max(0.0, k)));
}

/// Positions of the floor(r·m) highest scores; ties go to the lower id.
/// Returned in descending score order.
inline std::vector<std::size_t> select_top_scores(std::span<const double> scores, std::span<const std::size_t> ids,
                                                  double relabel_rate) {
  if (scores.size() != ids.size()) throw std::invalid_argument("select_top_scores: size mismatch");
  const std::size_t k = in_dist_count(scores.size(), relabel_rate);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  order.resize(k);
  return order;
}

struct Selection {
  std::vector<std::size_t> selected;   // positions into the noisy set
  std::vector<std::size_t> discarded;  // positions into the noisy set
  std::vector<double> scores;          // P_in per noisy-set position
};

/// Scores every noisy sample and keeps the floor(r·|noisy|) most in-distribution.
inline Selection select_in_distribution(const SelectionNetParams<double>& s, const Batch& noisy,
                                        const std::vector<Vec<double>>& noisy_features, double relabel_rate) {
  require_dim(noisy_features.size(), noisy.size(), "select_in_distribution");
  Selection out;
  std::vector<std::size_t> ids;
  for (std::size_t j = 0; j < noisy.size(); ++j) {
    out.scores.push_back(score_in_distribution(s, std::span<const double>(noisy_features[j])));
    ids.push_back(noisy[j].id);
  }
  out.selected = select_top_scores(out.scores, ids, relabel_rate);
  std::vector<bool> taken(noisy.size(), false);
  for (auto i : out.selected) taken[i] = true;
  for (std::size_t j = 0; j < noisy.size(); ++j) {
    if (!taken[j]) out.discarded.push_back(j);
  }
  return out;
}

}  // namespace metasel
