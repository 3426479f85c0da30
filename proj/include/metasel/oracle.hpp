// Independent verification machinery for the analytic code paths.
//
// Nothing here calls a hand-derived gradient of the quantity it checks:
// finite differences use only loss evaluation and parameter perturbation, the
// T-matrix oracle materializes every per-sample gradient and assembles the
// double sum literally, and subset optimality is certified by enumeration.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "metasel/classifier.hpp"
#include "metasel/linalg.hpp"
#include "metasel/selector.hpp"

namespace metasel::oracle {

inline constexpr double kDefaultEpsilon = 1e-5;

/// Three-point stencil (f(x+ε) − f(x−ε)) / 2ε, error O(ε²); or the five-point
/// stencil (8[f(x+ε) − f(x−ε)] − [f(x+2ε) − f(x−2ε)]) / 12ε, error O(ε⁴),
/// which tolerates a larger ε and so loses less to round-off.
enum class Stencil { three_point, five_point };

/// Central difference of a scalar function of a parameter vector, one
/// coordinate at a time.
inline Vec<double> central_difference(const std::function<double(const Vec<double>&)>& f, Vec<double> x, double eps,
                                      Stencil stencil = Stencil::three_point) {
  if (!(eps > 0.0)) throw std::invalid_argument("central_difference: eps must be > 0");
  Vec<double> g(x.size());
  const auto at = [&](std::size_t k, double orig, double delta) {
    x[k] = orig + delta;
    const double v = f(x);
    x[k] = orig;
    return v;
  };
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = x[k];
    const double d1 = at(k, orig, eps) - at(k, orig, -eps);
    if (stencil == Stencil::three_point) {
      g[k] = d1 / (2.0 * eps);
    } else {
      const double d2 = at(k, orig, 2.0 * eps) - at(k, orig, -2.0 * eps);
      g[k] = (8.0 * d1 - d2) / (12.0 * eps);
    }
  }
  return g;
}

/// Finite-difference estimate of ∂/∂θ_s objective(θ̂_h(θ_s)), rebuilding the
/// virtual step for every perturbation.
inline Vec<double> fd_meta_gradient(const ClassifierState<double>& h, const SelectionNetParams<double>& s,
                                    const Batch& batch, const std::function<double(const ClassifierState<double>&)>& objective,
                                    double alpha, double eps = kDefaultEpsilon) {
  return central_difference(
      [&](const Vec<double>& p) {
        const SelectionNetParams<double> perturbed(s.shape, p);
        return objective(virtual_step(h, perturbed, batch, alpha));
      },
      s.params, eps);
}

/// Same, with the objective being the mean meta-batch loss.
inline Vec<double> fd_meta_gradient(const ClassifierState<double>& h, const SelectionNetParams<double>& s,
                                    const Batch& batch, const Batch& meta_batch, double alpha,
                                    double eps = kDefaultEpsilon) {
  if (meta_batch.empty()) throw std::invalid_argument("fd_meta_gradient: empty meta batch");
  return fd_meta_gradient(
      h, s, batch, [&](const ClassifierState<double>& lookahead) { return meta_loss(lookahead, meta_batch); }, alpha,
      eps);
}

/// Finite-difference gradient of a per-sample classifier loss w.r.t. θ_h.
inline Vec<double> fd_loss_gradient(const ClassifierState<double>& h, const Batch& batch, std::span<const double> weights,
                                    double eps = kDefaultEpsilon, Stencil stencil = Stencil::three_point) {
  require_dim(weights.size(), batch.size(), "fd_loss_gradient");
  return central_difference(
      [&](const Vec<double>& p) {
        const ClassifierState<double> perturbed(h.shape, p);
        double acc = 0.0;
        for (std::size_t j = 0; j < batch.size(); ++j) {
          acc += weights[j] * per_sample_loss(perturbed, batch[j].input, batch[j].label);
        }
        return acc / static_cast<double>(batch.size());
      },
      h.params, eps, stencil);
}

/// Closed-form gradient of cross-entropy(softmax(W f + b), y) with respect to
/// [W (C×d_f, row-major) | b]: (softmax − onehot) ⊗ f and (softmax − onehot).
inline Vec<double> softmax_affine_gradient(std::span<const double> logits, std::span<const double> f, std::size_t y) {
  const std::size_t C = logits.size();
  if (y >= C) throw std::invalid_argument("softmax_affine_gradient: invalid label");
  // Softmax by direct exponentiation after max shift; independent of linalg::softmax.
  double m = logits[0];
  for (double z : logits) m = std::max(m, z);
  Vec<double> p(C);
  double s = 0.0;
  for (std::size_t c = 0; c < C; ++c) s += (p[c] = std::exp(logits[c] - m));
  Vec<double> g(C * f.size() + C);
  for (std::size_t c = 0; c < C; ++c) {
    const double d = p[c] / s - (c == y ? 1.0 : 0.0);
    for (std::size_t k = 0; k < f.size(); ++k) g[c * f.size() + k] = d * f[k];
    g[C * f.size() + c] = d;
  }
  return g;
}

/// T_ij = ⟨∇L^meta_i(θ̂_h), ∇L_j(θ_h)⟩ from explicitly materialized gradients.
/// Rows index meta samples, columns training samples.
inline std::vector<Vec<double>> brute_T_matrix(const ClassifierState<double>& h, const ClassifierState<double>& lookahead,
                                               const Batch& batch, const Batch& meta_batch) {
  if (batch.empty() || meta_batch.empty()) throw std::invalid_argument("brute_T_matrix: empty batch");
  std::vector<Vec<double>> train_grads, meta_grads;
  for (const auto& e : batch) train_grads.push_back(per_sample_grad(h, e.input, e.label));
  for (const auto& e : meta_batch) meta_grads.push_back(per_sample_grad(lookahead, e.input, e.label));
  std::vector<Vec<double>> T(meta_grads.size(), Vec<double>(train_grads.size()));
  for (std::size_t i = 0; i < meta_grads.size(); ++i) {
    for (std::size_t j = 0; j < train_grads.size(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < meta_grads[i].size(); ++k) acc += meta_grads[i][k] * train_grads[j][k];
      T[i][j] = acc;
    }
  }
  return T;
}

/// (−α/(n·m)) Σ_i Σ_j T_ij ∂S_net(f_j)/∂θ_s, summed term by term.
inline Vec<double> assemble_meta_gradient(const std::vector<Vec<double>>& T, const ClassifierState<double>& h,
                                          const SelectionNetParams<double>& s, const Batch& batch, double alpha) {
  const std::size_t m = T.size();
  const std::size_t n = batch.size();
  Vec<double> g(s.params.size(), 0.0);
  const double coef = -alpha / (static_cast<double>(n) * static_cast<double>(m));
  for (std::size_t j = 0; j < n; ++j) {
    const auto f = features(h, batch[j].input);
    const auto ds = score_gradient(s, f);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += coef * T[i][j] * ds[k];
    }
  }
  return g;
}

enum class Objective { min_sum, max_sum };

struct SizeConstraint {
  enum class Kind { at_least, at_most } kind;
  std::size_t bound;
};

inline constexpr std::size_t kMaxExhaustive = 20;

/// Enumerates every subset satisfying the size constraint and returns the
/// indices (ascending) of the first optimum in mask order.
inline std::vector<std::size_t> exhaustive_subset(std::span<const double> values, SizeConstraint constraint,
                                                  Objective objective) {
  const std::size_t n = values.size();
  if (n > kMaxExhaustive) throw std::invalid_argument("exhaustive_subset: at most 20 elements");
  std::uint32_t best_mask = 0;
  double best = objective == Objective::min_sum ? std::numeric_limits<double>::infinity()
                                                : -std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    const auto size = static_cast<std::size_t>(__builtin_popcount(mask));
    const bool ok = constraint.kind == SizeConstraint::Kind::at_least ? size >= constraint.bound : size <= constraint.bound;
    if (!ok) continue;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) sum += values[i];
    }
    const bool better = objective == Objective::min_sum ? sum < best : sum > best;
    if (!found || better) {
      best = sum;
      best_mask = mask;
      found = true;
    }
  }
  if (!found) throw std::invalid_argument("exhaustive_subset: no admissible subset");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (best_mask & (1u << i)) out.push_back(i);
  }
  return out;
}

/// |a − b| / max(|a|, |b|, floor). The floor keeps coordinates whose true
/// derivative is ~0 from turning round-off into a large ratio.
inline double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct BlockError {
  std::string block;
  double max_rel = 0.0;
  double mean_rel = 0.0;
  std::size_t count = 0;
};

struct ParamBlock {
  std::string name;
  std::size_t offset;
  std::size_t size;
};

inline std::vector<ParamBlock> selection_blocks(const SelectionNetShape& s) {
  return {{"hidden_weights", s.w_offset(), s.hidden * s.feature_dim},
          {"hidden_bias", s.b_offset(), s.hidden},
          {"out_weights", s.v_offset(), s.hidden},
          {"out_bias", s.c_offset(), 1}};
}

inline std::vector<ParamBlock> classifier_blocks(const ClassifierShape& s) {
  return {{"feature_weights", s.w1_offset(), s.feature_dim * s.input_dim},
          {"feature_bias", s.b1_offset(), s.feature_dim},
          {"head_weights", s.w2_offset(), s.num_classes * s.feature_dim},
          {"head_bias", s.b2_offset(), s.num_classes}};
}

inline std::vector<BlockError> compare_by_block(std::span<const double> a, std::span<const double> b,
                                                const std::vector<ParamBlock>& blocks, double floor) {
  require_dim(a.size(), b.size(), "compare_by_block");
  std::vector<BlockError> out;
  for (const auto& blk : blocks) {
    BlockError e{blk.name, 0.0, 0.0, blk.size};
    for (std::size_t k = blk.offset; k < blk.offset + blk.size; ++k) {
      const double r = relative_error(a[k], b[k], floor);
      e.max_rel = std::max(e.max_rel, r);
      e.mean_rel += r;
    }
    if (blk.size) e.mean_rel /= static_cast<double>(blk.size);
    out.push_back(e);
  }
  return out;
}

inline double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  require_dim(a.size(), b.size(), "max_relative_error");
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, relative_error(a[k], b[k], floor));
  return m;
}

/// Smallest |pre-activation| of S_net's hidden units over the batch. Finite
/// differences are only trustworthy when this clears the perturbation size.
inline double min_abs_preactivation(const ClassifierState<double>& h, const SelectionNetParams<double>& s,
                                    const Batch& batch) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& e : batch) {
    const auto f = features(h, e.input);
    for (double z : selection_preactivations(s, std::span<const double>(f))) m = std::min(m, std::abs(z));
  }
  return m;
}

struct ReportRow {
  std::string comparison;
  BlockError error;
};

inline void write_report_csv(std::ostream& os, const std::vector<ReportRow>& rows) {
  os << "comparison,block,count,max_rel_error,mean_rel_error\n";
  os.precision(6);
  for (const auto& r : rows) {
    os << r.comparison << ',' << r.error.block << ',' << r.error.count << ',' << std::scientific << r.error.max_rel << ','
       << r.error.mean_rel << std::defaultfloat << '\n';
  }
}

}  // namespace metasel::oracle
