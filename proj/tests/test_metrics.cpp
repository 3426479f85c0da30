#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "metasel/log_io.hpp"
#include "metasel/metrics.hpp"
#include "metasel/noise_synth.hpp"
#include "test_util.hpp"

using namespace metasel;

TEST(Aca, PerfectAndHalf) {
  const std::vector<std::size_t> truth{0, 0, 1, 1};
  EXPECT_EQ(compute_aca(truth, truth, 2), 100.0);
  const std::vector<std::size_t> pred{0, 1, 1, 0};
  EXPECT_EQ(compute_aca(pred, truth, 2), 50.0);
}

TEST(Aca, AveragesClassesNotSamples) {
  // Class 0: 9/9 right. Class 1: 0/1 right. Sample accuracy 90%, ACA 50%.
  std::vector<std::size_t> truth(9, 0), pred(9, 0);
  truth.push_back(1);
  pred.push_back(0);
  EXPECT_EQ(compute_aca(pred, truth, 2), 50.0);
}

TEST(Aca, AbsentClassIsSkippedWithWarning) {
  const std::vector<std::size_t> truth{0, 0, 2};
  const std::vector<std::size_t> pred{0, 1, 2};
  std::ostringstream warn;
  EXPECT_DOUBLE_EQ(compute_aca(pred, truth, 3, &warn), 75.0);
  EXPECT_NE(warn.str().find("class 1"), std::string::npos);
}

TEST(Aca, RejectsBadInput) {
  const std::vector<std::size_t> a{0}, b{0, 1}, out{5};
  EXPECT_THROW(compute_aca(a, b, 2), std::invalid_argument);
  EXPECT_THROW(compute_aca(a, out, 2), std::invalid_argument);
  EXPECT_THROW(compute_aca({}, {}, 2), std::invalid_argument);
}

TEST(Aca, InvariantToSamplePermutation) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> label(0, 3);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::size_t> truth(50), pred(50), order(50);
    for (std::size_t i = 0; i < 50; ++i) {
      truth[i] = label(rng);
      pred[i] = label(rng);
      order[i] = i;
    }
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> pt, pp;
    for (auto i : order) {
      pt.push_back(truth[i]);
      pp.push_back(pred[i]);
    }
    EXPECT_DOUBLE_EQ(compute_aca(pred, truth, 4), compute_aca(pp, pt, 4));
  }
}

TEST(EvaluateAca, ScoresInDistAgainstTruthAndSkipsOod) {
  // Zero classifier predicts class 0 everywhere.
  const ClassifierState<double> h(ClassifierShape{1, 2, 2});
  const Dataset d(2, 1,
                  {{0, {0.0}, 0, NoiseTag::clean()},
                   {1, {0.0}, 1, NoiseTag::in_dist(0)},
                   {2, {0.0}, 1, NoiseTag::clean()},
                   {3, {0.0}, 0, NoiseTag::out_dist()}});
  // Class 0: ids 0, 1 both right. Class 1: id 2 wrong.
  EXPECT_EQ(evaluate_aca(h, d), 50.0);
}

TEST(PrecisionRecall, MissingWhenUndefined) {
  const auto pr = precision_recall(0, 0, 0);
  EXPECT_TRUE(std::isnan(pr.precision));
  EXPECT_TRUE(std::isnan(pr.recall));
  const auto ok = precision_recall(3, 4, 6);
  EXPECT_EQ(ok.precision, 0.75);
  EXPECT_EQ(ok.recall, 0.5);
}

namespace {

Dataset tagged_set() {
  // ids 0-3 clean, 4-6 in-dist (true 0, observed 1), 7-9 OOD.
  std::vector<Sample> s;
  for (std::size_t i = 0; i < 4; ++i) s.push_back({i, {0.0}, i % 2, NoiseTag::clean()});
  for (std::size_t i = 4; i < 7; ++i) s.push_back({i, {0.0}, 1, NoiseTag::in_dist(0)});
  for (std::size_t i = 7; i < 10; ++i) s.push_back({i, {0.0}, 0, NoiseTag::out_dist()});
  return Dataset(2, 1, s);
}

}  // namespace

TEST(SelectionMetrics, HandCountedEpoch) {
  const auto d = tagged_set();
  const auto tags = index_by_id(d);
  EpochSelection sel;
  sel.clean_ids = {0, 1, 2, 4};
  sel.noisy_ids = {3, 5, 6, 7, 8, 9};
  sel.selected_ids = {5, 7};
  sel.pseudo_labels = {0, 1};
  sel.discarded_ids = {3, 6, 8, 9};
  const auto m = selection_metrics(sel, tags);
  EXPECT_EQ(m.clean.precision, 0.75);
  EXPECT_EQ(m.clean.recall, 0.75);
  EXPECT_EQ(m.in_dist.precision, 0.5);
  EXPECT_EQ(m.in_dist.recall, 0.5);
  EXPECT_EQ(m.out_dist.precision, 0.5);
  EXPECT_NEAR(m.out_dist.recall, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.in_dist_base_rate, 2.0 / 6.0, 1e-15);
  EXPECT_EQ(m.out_dist_base_rate, 0.5);

  const auto r = relabel_accuracy(sel, tags);
  EXPECT_EQ(r.overall, 0.5);  // the OOD pick counts as wrong
  EXPECT_EQ(r.in_dist, 1.0);
  EXPECT_EQ(r.observed_in_dist, 0.0);
  EXPECT_EQ(r.in_dist_selected, 1u);
}

TEST(SelectionMetrics, UnknownIdThrows) {
  const auto tags = index_by_id(tagged_set());
  EpochSelection sel;
  sel.clean_ids = {42};
  EXPECT_THROW(selection_metrics(sel, tags), std::invalid_argument);
}

TEST(StratifiedStats, GroupsByNoiseKind) {
  const auto d = tagged_set();
  TrainConfig c;
  c.num_classes = 2;
  c.feature_dim = 2;
  c.selection_hidden = 3;
  auto m = init_model(1, c);
  std::fill(m.classifier.params.begin(), m.classifier.params.end(), 0.0);
  std::fill(m.selector.params.begin(), m.selector.params.end(), 0.0);
  const auto st = stratified_stats(m, d);
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(st.loss[k], std::log(2.0), 1e-15);
    EXPECT_EQ(st.pin[k], 0.5);
  }
  EXPECT_NEAR(st.loss_noisy, std::log(2.0), 1e-15);
}

TEST(TagObserver, FillsColumnsOnlyWhenSelectionIsActive) {
  const auto b = make_benchmark(metasel::testing::tiny_noise(), 6, 20, false);
  const auto c = metasel::testing::tiny_config();
  const auto full = train(c, b.train, b.meta, init_model(b.train.input_dim(), c), Method::full,
                          make_tag_observer(b.train, &b.test));
  for (const auto& e : full.log.epochs) {
    EXPECT_FALSE(std::isnan(e.test_aca));
    EXPECT_FALSE(std::isnan(e.pin_out_dist));
    EXPECT_EQ(std::isnan(e.clean_precision), e.epoch <= c.warmup_epochs);
  }
  const auto plain = train(c, b.train, b.meta, init_model(b.train.input_dim(), c), Method::plain,
                           make_tag_observer(b.train, &b.test));
  for (const auto& e : plain.log.epochs) EXPECT_TRUE(std::isnan(e.clean_precision));
}

TEST(TrainLogTable, PlainRunsOmitSelectionColumns) {
  TrainLog log;
  log.method = Method::plain;
  log.epochs.resize(2);
  const auto t = train_log_table(log);
  EXPECT_EQ(t.header, train_log_columns(false));
  EXPECT_EQ(std::count(t.header.begin(), t.header.end(), "in_dist_precision"), 0);
  ASSERT_EQ(t.rows.size(), 2u);
  for (const auto& r : t.rows) EXPECT_EQ(r.size(), t.header.size());
  log.method = Method::full;
  const auto f = train_log_table(log);
  EXPECT_EQ(f.header, train_log_columns(true));
  for (const auto& r : f.rows) EXPECT_EQ(r.size(), f.header.size());
}
