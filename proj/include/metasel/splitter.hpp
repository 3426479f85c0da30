// Small-loss split of a mini-batch into a presumed-clean set and a noisy set.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "metasel/classifier.hpp"
#include "metasel/types.hpp"

namespace metasel {

// Rounding slack so that e.g. (1 − 0.7)·10, which is 3.0000000000000004 in
// binary, rounds up to 3 rather than 4.
inline constexpr double kCountSlack = 1e-9;

/// |clean set| = ceil((1 − τ)·n).
inline std::size_t clean_count(std::size_t n, double drop_rate) {
  if (!(drop_rate >= 0.0 && drop_rate < 1.0)) throw std::invalid_argument("split: drop_rate must be in [0, 1)");
  const double k = std::ceil((1.0 - drop_rate) * static_cast<double>(n) - kCountSlack);
  return std::min(n, static_cast<std::size_t>(std::max(0.0, k)));
}

/// Positions sorted by (loss ascending, id ascending).
inline std::vector<std::size_t> order_by_loss(std::span<const double> losses, std::span<const std::size_t> ids) {
  if (losses.size() != ids.size()) throw std::invalid_argument("order_by_loss: size mismatch");
  std::vector<std::size_t> order(losses.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (losses[a] != losses[b]) return losses[a] < losses[b];
    return ids[a] < ids[b];
  });
  return order;
}

// Both sets keep batch order, so with τ = 0 the clean set is the batch itself
// and downstream gradient sums are bit-identical to an unsplit step.
struct SplitIndices {
  std::vector<std::size_t> clean;  // positions into the batch, ascending
  std::vector<std::size_t> noisy;
};

/// Split given precomputed losses: the ceil((1−τ)n) lowest-loss positions are clean.
inline SplitIndices split_indices(std::span<const double> losses, std::span<const std::size_t> ids, double drop_rate) {
  const std::size_t k = clean_count(losses.size(), drop_rate);
  const auto order = order_by_loss(losses, ids);
  SplitIndices out;
  out.clean.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  out.noisy.assign(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
  std::sort(out.clean.begin(), out.clean.end());
  std::sort(out.noisy.begin(), out.noisy.end());
  return out;
}

struct Split {
  Batch clean;
  Batch noisy;
  std::vector<double> losses;  // per batch position, at the state used for the split
};

inline Split split_by_loss(const ClassifierState<double>& state, const Batch& batch, double drop_rate) {
  if (batch.empty()) throw std::invalid_argument("split_by_loss: empty batch");
  std::vector<double> losses;
  std::vector<std::size_t> ids;
  losses.reserve(batch.size());
  ids.reserve(batch.size());
  for (const auto& e : batch) {
    losses.push_back(per_sample_loss(state, e.input, e.label));
    ids.push_back(e.id);
  }
  const auto idx = split_indices(losses, ids, drop_rate);
  Split out;
  for (auto i : idx.clean) out.clean.push_back(batch[i]);
  for (auto i : idx.noisy) out.noisy.push_back(batch[i]);
  out.losses = std::move(losses);
  return out;
}

}  // namespace metasel
