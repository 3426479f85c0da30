#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "metasel/metrics.hpp"
#include "metasel/noise_synth.hpp"
#include "metasel/schedule.hpp"
#include "metasel/trainer.hpp"
#include "test_util.hpp"

using namespace metasel;

namespace {

struct Run {
  std::vector<ModelState> steps;
  TrainResult result;
};

Run run(const TrainConfig& c, const Benchmark& b, Method m, const EpochObserver& obs = {}) {
  Run r;
  r.result = train(c, b.train, b.meta, init_model(b.train.input_dim(), c), m, obs,
                   [&](std::size_t, std::size_t, const ModelState& s) { r.steps.push_back(s); });
  return r;
}

/// Plain SGD written out independently of train(): same rng stream, same
/// θ_s/θ_l updates, vanilla warmup steps on θ_h throughout.
std::vector<ClassifierState<double>> reference_plain(const TrainConfig& c, const Benchmark& b) {
  const Batch train_set = b.train.examples();
  const Batch meta_set = b.meta.examples();
  auto m = init_model(b.train.input_dim(), c);
  std::mt19937_64 rng(c.seed);
  const detail::MetaSampler sampler(meta_set, c.num_classes);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<ClassifierState<double>> out;
  for (std::size_t epoch = 1; epoch <= c.total_epochs; ++epoch) {
    const double alpha = lr_schedule(static_cast<double>(epoch - 1), static_cast<double>(c.total_epochs), c.lr_classifier);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start + std::min(c.batch_size, kMinTailBatch) <= order.size(); start += c.batch_size) {
      Batch batch;
      for (std::size_t i = start; i < std::min(order.size(), start + c.batch_size); ++i) batch.push_back(train_set[order[i]]);
      const auto meta = sampler.sample(c.meta_batch_size, rng);
      m.selector = meta_update(m.selector, meta_gradient(m.classifier, m.selector, batch, meta, alpha).gradient,
                               c.lr_selection);
      m.labeler = labeler_update(m.labeler, meta, m.classifier, alpha);
      m.classifier = warmup_step(m.classifier, batch, alpha);
      out.push_back(m.classifier);
    }
  }
  return out;
}

Benchmark tiny_benchmark() { return make_benchmark(metasel::testing::tiny_noise(), 6, 20, false); }

}  // namespace

TEST(LrSchedule, EndpointsAndMidpointAreExact) {
  EXPECT_EQ(lr_schedule(0.0, 100.0, 0.2), 0.2);
  EXPECT_EQ(lr_schedule(100.0, 100.0, 0.2), 0.0);
  EXPECT_EQ(lr_schedule(50.0, 100.0, 0.2), 0.1);
  // π·t/t_max rounded in the wrong order misses α/2 by an ulp at T = 60.
  for (double t_max : {60.0, 7.0, 12.0, 1000.0}) EXPECT_EQ(lr_schedule(t_max / 2, t_max, 0.2), 0.1);
  EXPECT_THROW(lr_schedule(101.0, 100.0, 0.2), std::out_of_range);
  EXPECT_THROW(lr_schedule(-1.0, 100.0, 0.2), std::out_of_range);
  EXPECT_THROW(lr_schedule(0.0, 0.0, 0.2), std::invalid_argument);
}

TEST(LrSchedule, MonotoneNonIncreasing) {
  double prev = lr_schedule(0.0, 60.0, 1.0);
  for (int t = 1; t <= 60; ++t) {
    const double a = lr_schedule(t, 60.0, 1.0);
    EXPECT_LE(a, prev);
    prev = a;
  }
}

TEST(Train, PlainMatchesAnIndependentReferenceLoop) {
  const auto b = tiny_benchmark();
  const auto c = metasel::testing::tiny_config();
  const auto plain = run(c, b, Method::plain);
  const auto ref = reference_plain(c, b);
  ASSERT_EQ(plain.steps.size(), ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_EQ(plain.steps[i].classifier, ref[i]) << "step " << i;
}

TEST(Train, ZeroDropRateIsBitIdenticalToPlain) {
  const auto b = tiny_benchmark();
  auto c = metasel::testing::tiny_config();
  c.drop_rate = 0.0;
  const auto full = run(c, b, Method::full);
  const auto plain = run(c, b, Method::plain);
  ASSERT_EQ(full.steps.size(), plain.steps.size());
  for (std::size_t i = 0; i < full.steps.size(); ++i) ASSERT_EQ(full.steps[i], plain.steps[i]) << "step " << i;
}

TEST(Train, PureWarmupRunIsBitIdenticalToPlain) {
  const auto b = tiny_benchmark();
  auto c = metasel::testing::tiny_config();
  c.warmup_epochs = c.total_epochs;
  const auto full = run(c, b, Method::full);
  const auto plain = run(c, b, Method::plain);
  ASSERT_EQ(full.steps.size(), plain.steps.size());
  for (std::size_t i = 0; i < full.steps.size(); ++i) ASSERT_EQ(full.steps[i], plain.steps[i]) << "step " << i;
}

TEST(Train, ZeroRelabelRateIsBitIdenticalToDiscardOnly) {
  const auto b = tiny_benchmark();
  auto c = metasel::testing::tiny_config();
  c.relabel_rate = 0.0;
  const auto full = run(c, b, Method::full);
  const auto discard = run(c, b, Method::discard_only);
  ASSERT_EQ(full.steps.size(), discard.steps.size());
  for (std::size_t i = 0; i < full.steps.size(); ++i) ASSERT_EQ(full.steps[i], discard.steps[i]) << "step " << i;
}

TEST(Train, PostWarmupFullDiffersFromPlain) {
  const auto b = tiny_benchmark();
  const auto c = metasel::testing::tiny_config();
  EXPECT_NE(run(c, b, Method::full).result.model, run(c, b, Method::plain).result.model);
}

TEST(Train, DeterministicForAFixedSeed) {
  const auto b = tiny_benchmark();
  const auto c = metasel::testing::tiny_config();
  const auto x = run(c, b, Method::full);
  const auto y = run(c, b, Method::full);
  EXPECT_EQ(x.result.model, y.result.model);
  auto other = c;
  other.seed = c.seed + 1;
  EXPECT_NE(run(other, b, Method::full).result.model, x.result.model);
}

TEST(Train, NeverReadsNoiseTags) {
  const auto b = tiny_benchmark();
  const auto c = metasel::testing::tiny_config();
  const auto tagged = train(c, b.train, b.meta, init_model(b.train.input_dim(), c), Method::full);
  const auto blind = train(c, strip_tags(b.train), b.meta, init_model(b.train.input_dim(), c), Method::full);
  EXPECT_EQ(tagged.model, blind.model);
}

TEST(Train, RoutingCountsAreConserved) {
  const auto b = tiny_benchmark();
  const auto c = metasel::testing::tiny_config();
  std::vector<EpochSelection> sels;
  const auto r = train(c, b.train, b.meta, init_model(b.train.input_dim(), c), Method::full,
                       [&](const EpochContext& ctx, EpochRecord&) { sels.push_back(ctx.selection); });
  ASSERT_EQ(r.log.epochs.size(), c.total_epochs);
  for (std::size_t e = 0; e < c.total_epochs; ++e) {
    const auto& rec = r.log.epochs[e];
    const auto& sel = sels[e];
    EXPECT_EQ(rec.epoch, e + 1);
    if (rec.epoch <= c.warmup_epochs) {
      EXPECT_EQ(rec.clean_count, rec.samples_seen);
      EXPECT_EQ(rec.noisy_count, 0u);
      EXPECT_TRUE(sel.clean_ids.empty());
      continue;
    }
    EXPECT_EQ(rec.clean_count + rec.noisy_count, rec.samples_seen);
    EXPECT_EQ(sel.clean_ids.size(), rec.clean_count);
    EXPECT_EQ(sel.noisy_ids.size(), rec.noisy_count);
    EXPECT_EQ(sel.selected_ids.size() + sel.discarded_ids.size(), sel.noisy_ids.size());
    EXPECT_EQ(sel.selected_ids.size(), rec.in_dist_count);
    EXPECT_EQ(sel.pseudo_labels.size(), sel.selected_ids.size());
    // Per batch of 20 with τ = 0.4: 12 clean, 8 noisy, floor(0.3·8) = 2 selected.
    const std::size_t tail = rec.samples_seen % c.batch_size;
    const std::size_t tail_selected = tail ? in_dist_count(tail - clean_count(tail, c.drop_rate), c.relabel_rate) : 0;
    EXPECT_EQ(rec.in_dist_count, 2 * (rec.samples_seen / c.batch_size) + tail_selected);
    auto all = sel.clean_ids;
    all.insert(all.end(), sel.noisy_ids.begin(), sel.noisy_ids.end());
    std::sort(all.begin(), all.end());
    EXPECT_EQ(std::adjacent_find(all.begin(), all.end()), all.end());
  }
}

TEST(Train, ShortTailBatchesAreSkipped) {
  std::mt19937_64 rng(1);
  const auto tr = metasel::testing::random_batch(43, 4, 3, rng);
  const auto meta = metasel::testing::random_batch(6, 4, 3, rng, 1000);
  auto c = metasel::testing::tiny_config();
  c.total_epochs = 3;
  c.warmup_epochs = 1;
  auto r = train(c, tr.batch, meta.batch, init_model(4, c));
  for (const auto& e : r.log.epochs) EXPECT_EQ(e.samples_seen, 40u);
  const auto tr44 = metasel::testing::random_batch(44, 4, 3, rng);
  r = train(c, tr44.batch, meta.batch, init_model(4, c));
  for (const auto& e : r.log.epochs) EXPECT_EQ(e.samples_seen, 44u);
}

TEST(Train, AlphaFollowsTheScheduleByEpoch) {
  const auto b = tiny_benchmark();
  const auto c = metasel::testing::tiny_config();
  const auto r = train(c, b.train, b.meta, init_model(b.train.input_dim(), c), Method::plain);
  for (const auto& e : r.log.epochs) {
    EXPECT_EQ(e.alpha, lr_schedule(static_cast<double>(e.epoch - 1), static_cast<double>(c.total_epochs), c.lr_classifier));
  }
}

TEST(Train, DivergenceAbortsWithTrainingError) {
  const auto b = tiny_benchmark();
  auto c = metasel::testing::tiny_config();
  c.lr_classifier = 1e308;
  EXPECT_THROW(train(c, b.train, b.meta, init_model(b.train.input_dim(), c)), TrainingError);
}

TEST(Train, RejectsBadInputs) {
  const auto b = tiny_benchmark();
  auto c = metasel::testing::tiny_config();
  const auto m = init_model(b.train.input_dim(), c);
  auto bad = c;
  bad.drop_rate = 1.0;
  EXPECT_THROW(train(bad, b.train, b.meta, m), std::invalid_argument);
  EXPECT_THROW(train(c, b.train, b.train, m), std::invalid_argument);  // tagged meta set
  const auto big_meta = make_meta_set(make_clean_dataset(metasel::testing::tiny_noise()), 20, 1);
  EXPECT_THROW(train(c, b.train, big_meta, m), std::invalid_argument);  // M > N/5
  auto wrong_c = c;
  wrong_c.num_classes = 4;
  EXPECT_THROW(train(wrong_c, b.train, b.meta, m), std::invalid_argument);
}

TEST(Train, MomentumAndAttachedFeaturesRun) {
  const auto b = tiny_benchmark();
  auto c = metasel::testing::tiny_config();
  const auto base = train(c, b.train, b.meta, init_model(b.train.input_dim(), c)).model;
  c.momentum = 0.9;
  const auto with_momentum = train(c, b.train, b.meta, init_model(b.train.input_dim(), c)).model;
  EXPECT_NE(with_momentum.classifier, base.classifier);
  c.momentum = 0.0;
  c.detach_features = false;
  const auto attached = train(c, b.train, b.meta, init_model(b.train.input_dim(), c)).model;
  EXPECT_NE(attached.classifier, base.classifier);
}

TEST(MetaSampler, RoundRobinOverClasses) {
  std::vector<std::vector<double>> xs(9, std::vector<double>{0.0});
  Batch meta;
  for (std::size_t i = 0; i < 9; ++i) meta.push_back({i, xs[i], i % 3});
  const detail::MetaSampler s(meta, 3);
  std::mt19937_64 rng(2);
  const auto out = s.sample(7, rng);
  ASSERT_EQ(out.size(), 7u);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i].label, i % 3);
  EXPECT_EQ(s.sample(2, rng).size(), 2u);
}

TEST(TrainingViolations, AllowsPureWarmup) {
  auto c = metasel::testing::tiny_config();
  c.warmup_epochs = c.total_epochs;
  EXPECT_TRUE(training_violations(c).empty());
  c.warmup_epochs = c.total_epochs + 1;
  EXPECT_FALSE(training_violations(c).empty());
}
