#pragma once

#include <random>
#include <vector>

#include "metasel/noise_synth.hpp"
#include "metasel/types.hpp"

namespace metasel::testing {

/// Owns the inputs behind a Batch of Examples.
struct OwnedBatch {
  std::vector<std::vector<double>> inputs;
  Batch batch;
};

inline OwnedBatch random_batch(std::size_t n, std::size_t d_in, std::size_t C, std::mt19937_64& rng,
                               std::size_t first_id = 0) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> label(0, C - 1);
  OwnedBatch b;
  b.inputs.resize(n, std::vector<double>(d_in));
  for (auto& x : b.inputs) {
    for (auto& v : x) v = n01(rng);
  }
  for (std::size_t i = 0; i < n; ++i) b.batch.push_back({first_id + i, b.inputs[i], label(rng)});
  return b;
}

/// A small benchmark that trains in well under a second.
inline NoiseSpec tiny_noise(std::uint64_t seed = 3) {
  NoiseSpec s;
  s.num_classes = 3;
  s.samples_per_class = 40;
  s.input_dim = 6;
  s.in_dist_flip_rate = 0.3;
  s.out_dist_fraction = 0.2;
  s.cluster_separation = 5.0;
  s.out_dist_offset = 4.0;
  s.seed = seed;
  return s;
}

inline TrainConfig tiny_config(std::uint64_t seed = 5) {
  TrainConfig c;
  c.num_classes = 3;
  c.drop_rate = 0.4;
  c.relabel_rate = 0.3;
  c.warmup_epochs = 2;
  c.total_epochs = 5;
  c.batch_size = 20;
  c.meta_batch_size = 6;
  c.lr_classifier = 0.2;
  c.lr_selection = 10.0;
  c.feature_dim = 8;
  c.selection_hidden = 16;
  c.seed = seed;
  return c;
}

}  // namespace metasel::testing
