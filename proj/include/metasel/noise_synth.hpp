// Synthetic noisy datasets with exact ground-truth noise tags.
//
// Class c is an isotropic unit-variance Gaussian centred at (s/√2)·e_c, so any two
// class centres are exactly s = cluster_separation apart. Out-of-distribution
// clusters sit on the remaining axes at out_dist_offset·e_j; every OOD sample is
// rejection-sampled to lie at least out_dist_offset from every class centre.
// Centres depend only on geometry (never the seed), so training, meta, and test
// sets generated with different seeds share one distribution.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "metasel/types.hpp"

namespace metasel {

struct NoiseSpec {
  std::size_t num_classes = 5;
  std::size_t samples_per_class = 200;
  std::size_t input_dim = 16;
  double in_dist_flip_rate = 0.3;
  double out_dist_fraction = 0.2;
  double cluster_separation = 3.0;
  double out_dist_offset = 4.0;
  std::size_t out_dist_clusters = 2;
  std::uint64_t seed = 0;
};

inline std::vector<std::string> validate_noise_spec(const NoiseSpec& s) {
  std::vector<std::string> v;
  if (s.num_classes < 2) v.emplace_back("num_classes must be >= 2");
  if (s.input_dim < s.num_classes) v.emplace_back("input_dim must be >= num_classes");
  if (!(s.in_dist_flip_rate >= 0.0 && s.in_dist_flip_rate < 1.0)) v.emplace_back("in_dist_flip_rate must be in [0, 1)");
  if (!(s.out_dist_fraction >= 0.0 && s.out_dist_fraction < 1.0)) v.emplace_back("out_dist_fraction must be in [0, 1)");
  if (!(s.cluster_separation > 0.0)) v.emplace_back("cluster_separation must be > 0");
  if (!(s.out_dist_offset > 0.0)) v.emplace_back("out_dist_offset must be > 0");
  if (s.out_dist_fraction > 0.0 && s.input_dim <= s.num_classes) {
    v.emplace_back("out-of-distribution clusters need input_dim > num_classes");
  }
  if (s.out_dist_clusters < 1) v.emplace_back("out_dist_clusters must be >= 1");
  return v;
}

inline std::vector<double> class_center(const NoiseSpec& spec, std::size_t c) {
  std::vector<double> mu(spec.input_dim, 0.0);
  mu.at(c) = spec.cluster_separation / std::sqrt(2.0);
  return mu;
}

inline std::vector<double> out_dist_center(const NoiseSpec& spec, std::size_t k) {
  const std::size_t free_axes = spec.input_dim - spec.num_classes;
  if (free_axes == 0) throw std::invalid_argument("out_dist_center: no free axis (input_dim <= num_classes)");
  std::vector<double> mu(spec.input_dim, 0.0);
  const double sign = (k / free_axes) % 2 == 0 ? 1.0 : -1.0;
  mu[spec.num_classes + k % free_axes] = sign * spec.out_dist_offset;
  return mu;
}

inline double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

/// Smallest distance from x to any class centre.
inline double min_class_center_distance(const NoiseSpec& spec, const std::vector<double>& x) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < spec.num_classes; ++c) best = std::min(best, distance(x, class_center(spec, c)));
  return best;
}

/// C Gaussian clusters, all tagged Clean, labels equal to cluster identity.
/// Ids run first_id, first_id+1, ... in class-major order.
inline Dataset make_clean_dataset(const NoiseSpec& spec, std::size_t first_id = 0) {
  if (!(spec.cluster_separation > 0.0)) throw std::invalid_argument("make_clean_dataset: cluster_separation must be > 0");
  if (spec.num_classes < 2) throw std::invalid_argument("make_clean_dataset: num_classes must be >= 2");
  if (spec.input_dim < spec.num_classes) throw std::invalid_argument("make_clean_dataset: input_dim must be >= num_classes");

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Sample> samples;
  samples.reserve(spec.num_classes * spec.samples_per_class);
  std::size_t id = first_id;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    const auto mu = class_center(spec, c);
    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      Sample s;
      s.id = id++;
      s.observed_label = c;
      s.input.resize(spec.input_dim);
      for (std::size_t k = 0; k < spec.input_dim; ++k) s.input[k] = mu[k] + normal(rng);
      samples.push_back(std::move(s));
    }
  }
  return Dataset(spec.num_classes, spec.input_dim, std::move(samples));
}

/// Symmetric label flips: each sample independently, with probability flip_rate,
/// moves to a uniformly drawn different class and is tagged InDistNoisy.
inline Dataset inject_in_dist_noise(const Dataset& dataset, double flip_rate, std::uint64_t seed) {
  if (!(flip_rate >= 0.0 && flip_rate <= 1.0)) throw std::invalid_argument("inject_in_dist_noise: flip_rate must be in [0, 1]");
  if (!dataset.all_clean()) throw std::invalid_argument("inject_in_dist_noise: input must be all Clean");
  const std::size_t C = dataset.num_classes();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> other(0, C - 2);
  auto samples = dataset.samples();
  for (auto& s : samples) {
    if (unif(rng) < flip_rate) {
      const std::size_t original = s.observed_label;
      std::size_t k = other(rng);
      if (k >= original) ++k;
      s.observed_label = k;
      s.truth = NoiseTag::in_dist(original);
    }
  }
  return Dataset(C, dataset.input_dim(), std::move(samples));
}

/// Number of OOD samples appended so they make up `fraction` of the result.
inline std::size_t out_dist_count(std::size_t base_size, double fraction) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(base_size) / (1.0 - fraction)));
}

/// Appends round(fraction·N/(1−fraction)) samples from the OOD clusters, each
/// with a uniform random observed label and tag OutOfDist.
inline Dataset inject_out_dist_noise(const Dataset& dataset, double fraction, const NoiseSpec& spec, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw std::invalid_argument("inject_out_dist_noise: fraction must be in [0, 1)");
  const std::size_t k = out_dist_count(dataset.size(), fraction);
  if (k == 0) return dataset;
  if (spec.input_dim != dataset.input_dim() || spec.num_classes != dataset.num_classes()) {
    throw std::invalid_argument("inject_out_dist_noise: spec geometry does not match dataset");
  }
  if (spec.input_dim <= spec.num_classes) throw std::invalid_argument("inject_out_dist_noise: input_dim must exceed num_classes");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> label(0, spec.num_classes - 1);
  std::uniform_int_distribution<std::size_t> cluster(0, spec.out_dist_clusters - 1);

  auto samples = dataset.samples();
  std::size_t next_id = dataset.empty() ? 0 : dataset.max_id() + 1;
  for (std::size_t i = 0; i < k; ++i) {
    const auto mu = out_dist_center(spec, cluster(rng));
    std::vector<double> x(spec.input_dim);
    for (int attempt = 0;; ++attempt) {
      if (attempt == 10000) throw std::runtime_error("inject_out_dist_noise: rejection sampling did not terminate");
      for (std::size_t d = 0; d < spec.input_dim; ++d) x[d] = mu[d] + normal(rng);
      if (min_class_center_distance(spec, x) >= spec.out_dist_offset) break;
    }
    Sample s;
    s.id = next_id++;
    s.input = std::move(x);
    s.observed_label = label(rng);
    s.truth = NoiseTag::out_dist();
    samples.push_back(std::move(s));
  }
  return Dataset(dataset.num_classes(), dataset.input_dim(), std::move(samples));
}

/// Exactly m samples per class, drawn without replacement from a clean source.
/// Output keeps the source's order within the chosen subset.
inline Dataset make_meta_set(const Dataset& clean_source, std::size_t per_class, std::uint64_t seed) {
  if (per_class == 0) throw std::invalid_argument("make_meta_set: per_class must be >= 1");
  if (!clean_source.all_clean()) throw std::invalid_argument("make_meta_set: source must be all Clean");
  const std::size_t C = clean_source.num_classes();
  std::vector<std::vector<std::size_t>> by_class(C);
  for (std::size_t i = 0; i < clean_source.size(); ++i) by_class[clean_source[i].observed_label].push_back(i);

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < C; ++c) {
    auto& pool = by_class[c];
    if (pool.size() < per_class) {
      throw std::invalid_argument("make_meta_set: class " + std::to_string(c) + " has only " + std::to_string(pool.size()) +
                                  " samples, need " + std::to_string(per_class));
    }
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < per_class; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      chosen.push_back(pool[i]);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<Sample> samples;
  samples.reserve(chosen.size());
  for (auto i : chosen) samples.push_back(clean_source[i]);
  return Dataset(C, clean_source.input_dim(), std::move(samples));
}

/// Training set, meta set, and clean test set for one seeded trial.
struct Benchmark {
  Dataset train;
  Dataset meta;
  Dataset test;
};

/// Builds a benchmark from one NoiseSpec. Sub-seeds are derived from spec.seed.
/// With meta_in_train the meta samples are also appended to the training set
/// (as clean samples); otherwise the meta set comes from a disjoint clean pool.
inline Benchmark make_benchmark(const NoiseSpec& spec, std::size_t meta_per_class, std::size_t test_per_class,
                                bool meta_in_train) {
  if (auto v = validate_noise_spec(spec); !v.empty()) throw std::invalid_argument("noise spec: " + v.front());
  std::seed_seq seq{spec.seed, std::uint64_t{0x6d657461}};
  std::vector<std::uint64_t> seeds(6);
  seq.generate(seeds.begin(), seeds.end());

  NoiseSpec s = spec;
  s.seed = seeds[0];
  const auto clean = make_clean_dataset(s, 0);
  auto noisy = inject_in_dist_noise(clean, spec.in_dist_flip_rate, seeds[1]);

  NoiseSpec meta_pool_spec = spec;
  meta_pool_spec.seed = seeds[2];
  meta_pool_spec.samples_per_class = meta_per_class;
  // Ids of the meta pool start above anything the training set can use.
  const std::size_t meta_base = 10 * (clean.size() + out_dist_count(clean.size(), spec.out_dist_fraction) + 1);
  const auto meta = make_meta_set(make_clean_dataset(meta_pool_spec, meta_base), meta_per_class, seeds[3]);

  if (meta_in_train) noisy = concat(noisy, meta);
  auto train = inject_out_dist_noise(noisy, spec.out_dist_fraction, spec, seeds[4]);

  NoiseSpec test_spec = spec;
  test_spec.seed = seeds[5];
  test_spec.samples_per_class = test_per_class;
  auto test = make_clean_dataset(test_spec, 0);
  return {std::move(train), meta, std::move(test)};
}

}  // namespace metasel
