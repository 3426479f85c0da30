#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "metasel/classifier.hpp"
#include "metasel/dual.hpp"
#include "metasel/oracle.hpp"
#include "test_util.hpp"

using namespace metasel;
using metasel::testing::random_batch;

namespace {

ClassifierState<double> random_state(ClassifierShape shape, std::mt19937_64& rng, double scale = 0.5) {
  ClassifierState<double> s(shape);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : s.params) v = n(rng);
  return s;
}

const ClassifierShape kSmall{4, 6, 3};

}  // namespace

TEST(Features, ZeroParametersGiveZeroFeatures) {
  const ClassifierState<double> s(kSmall);
  const std::vector<double> x{1.0, -2.0, 3.0, 0.5};
  for (double f : features(s, x)) EXPECT_EQ(f, 0.0);
}

TEST(Features, DeterministicAndCorrectWidth) {
  std::mt19937_64 rng(1);
  const auto s = random_state(kSmall, rng);
  const std::vector<double> x{0.3, -0.2, 0.9, 1.1};
  const auto a = features(s, x), b = features(s, x);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), kSmall.feature_dim);
  EXPECT_THROW(features(s, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(InitClassifier, GlorotWeightsZeroBiases) {
  std::mt19937_64 rng(2);
  const auto s = init_classifier(ClassifierShape{16, 64, 5}, rng);
  ASSERT_EQ(s.params.size(), s.shape.size());
  for (std::size_t k = 0; k < 64; ++k) EXPECT_EQ(s.b1(k), 0.0);
  for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(s.b2(c), 0.0);
  const double a = std::sqrt(6.0 / (16.0 + 64.0));
  for (std::size_t k = 0; k < s.shape.b1_offset(); ++k) EXPECT_LE(std::abs(s.params[k]), a);
}

TEST(CrossEntropy, UniformLogitsGiveLogC) {
  const std::vector<double> z(4, 0.7);
  EXPECT_NEAR(cross_entropy(std::span<const double>(z), Target::hard(2)), std::log(4.0), 1e-15);
}

TEST(CrossEntropy, ConfidentCorrectLogitApproachesZero) {
  const std::vector<double> z{50.0, 0.0, 0.0};
  EXPECT_LT(cross_entropy(std::span<const double>(z), Target::hard(0)), 1e-20);
}

TEST(CrossEntropy, ConfidentWrongLogitIsStable) {
  const std::vector<double> z{10.0, -10.0};
  EXPECT_NEAR(cross_entropy(std::span<const double>(z), Target::hard(1)), 20.0 + std::log1p(std::exp(-20.0)), 1e-6);
  const std::vector<double> huge{1000.0, -1000.0};
  EXPECT_NEAR(cross_entropy(std::span<const double>(huge), Target::hard(1)), 2000.0, 1e-9);
}

TEST(CrossEntropy, ShiftInvariant) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> z(5), shifted(5);
    for (auto& v : z) v = n(rng);
    const double c = n(rng) * 10;
    for (std::size_t i = 0; i < 5; ++i) shifted[i] = z[i] + c;
    EXPECT_NEAR(cross_entropy(std::span<const double>(z), Target::hard(t % 5)),
                cross_entropy(std::span<const double>(shifted), Target::hard(t % 5)), 1e-10);
  }
}

TEST(CrossEntropy, SoftTargetIsExpectedHardLoss) {
  const std::vector<double> z{0.2, -1.0, 0.5};
  const std::vector<double> q{0.2, 0.3, 0.5};
  double expected = 0.0;
  for (std::size_t c = 0; c < 3; ++c) expected += q[c] * cross_entropy(std::span<const double>(z), Target::hard(c));
  EXPECT_NEAR(cross_entropy(std::span<const double>(z), Target::soft(q)), expected, 1e-14);
}

TEST(PerSampleLoss, NonNegativeAndRejectsInvalidLabels) {
  std::mt19937_64 rng(4);
  const auto s = random_state(kSmall, rng);
  auto b = random_batch(50, 4, 3, rng);
  for (const auto& e : b.batch) EXPECT_GE(per_sample_loss(s, e.input, e.label), 0.0);
  EXPECT_THROW(per_sample_loss(s, b.batch[0].input, 3), std::invalid_argument);
  EXPECT_THROW(per_sample_grad(s, b.batch[0].input, 7), std::invalid_argument);
}

TEST(WeightedGrad, ZeroWeightsGiveZeroGradient) {
  std::mt19937_64 rng(5);
  const auto s = random_state(kSmall, rng);
  auto b = random_batch(6, 4, 3, rng);
  for (double g : weighted_grad(s, b.batch, std::vector<double>(6, 0.0))) EXPECT_EQ(g, 0.0);
}

TEST(WeightedGrad, UnitWeightsEqualMeanGradient) {
  std::mt19937_64 rng(6);
  const auto s = random_state(kSmall, rng);
  auto b = random_batch(6, 4, 3, rng);
  const auto g = weighted_grad(s, b.batch, std::vector<double>(6, 1.0));
  Vec<double> mean(s.params.size(), 0.0);
  for (const auto& e : b.batch) {
    const auto ge = per_sample_grad(s, e.input, e.label);
    for (std::size_t k = 0; k < ge.size(); ++k) mean[k] += ge[k] / 6.0;
  }
  for (std::size_t k = 0; k < g.size(); ++k) EXPECT_NEAR(g[k], mean[k], 1e-15);
  EXPECT_EQ(g, pooled_mean_grad(s, b.batch, {}));
}

TEST(WeightedGrad, MatchesFiniteDifferencesAtSmallEpsilon) {
  std::mt19937_64 rng(7);
  const auto s = random_state(kSmall, rng);
  auto b = random_batch(5, 4, 3, rng);
  const std::vector<double> w{0.1, 0.9, 0.5, 0.0, 1.3};
  const auto fd = oracle::fd_loss_gradient(s, b.batch, w, 1e-6);
  // Three-point differences at ε = 1e−6 carry ~1e−10 of absolute round-off,
  // so coordinates are compared relative to max(|a|, |b|, 1e−5).
  EXPECT_LT(oracle::max_relative_error(weighted_grad(s, b.batch, w), fd, 1e-5), 1e-5);
}

TEST(WeightedGrad, RejectsNegativeWeightsAndLengthMismatch) {
  std::mt19937_64 rng(8);
  const auto s = random_state(kSmall, rng);
  auto b = random_batch(2, 4, 3, rng);
  EXPECT_THROW(weighted_grad(s, b.batch, std::vector<double>{1.0, -0.1}), std::invalid_argument);
  EXPECT_THROW(weighted_grad(s, b.batch, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Gradients, AgreeWithForwardModeDual) {
  std::mt19937_64 rng(9);
  const auto s = random_state(kSmall, rng);
  auto b = random_batch(1, 4, 3, rng);
  const auto g = per_sample_grad(s, b.batch[0].input, b.batch[0].label);
  for (std::size_t k = 0; k < s.params.size(); k += 5) {
    auto d = lift<Dual<double>>(s);
    d.params[k].tangent = 1.0;
    EXPECT_NEAR(per_sample_loss(d, b.batch[0].input, b.batch[0].label).tangent, g[k], 1e-13);
  }
}

TEST(WarmupStep, ZeroStepLeavesStateUnchanged) {
  std::mt19937_64 rng(10);
  const auto s = random_state(kSmall, rng);
  auto b = random_batch(4, 4, 3, rng);
  EXPECT_EQ(warmup_step(s, b.batch, 0.0), s);
}

TEST(WarmupStep, StationaryBatchLeavesStateUnchanged) {
  // x = 0 and zero biases: features vanish, logits are uniform, and with
  // balanced labels the mean of (softmax − onehot) is exactly zero.
  std::mt19937_64 rng(11);
  auto s = random_state(ClassifierShape{3, 4, 2}, rng);
  for (std::size_t k = s.shape.b1_offset(); k < s.shape.w2_offset(); ++k) s.params[k] = 0.0;
  for (std::size_t k = s.shape.b2_offset(); k < s.shape.size(); ++k) s.params[k] = 0.0;
  const std::vector<double> zero(3, 0.0);
  const Batch b{{0, zero, 0}, {1, zero, 1}};
  EXPECT_EQ(warmup_step(s, b, 0.3), s);
}

TEST(WarmupStep, HeadUpdateIsTheClosedFormSoftmaxGradient) {
  std::mt19937_64 rng(12);
  const auto s = random_state(kSmall, rng);
  auto b = random_batch(1, 4, 3, rng);
  const double alpha = 0.1;
  const auto next = warmup_step(s, b.batch, alpha);
  const auto f = features(s, b.batch[0].input);
  const auto z = logits(s, b.batch[0].input);
  const auto g = oracle::softmax_affine_gradient(z, f, b.batch[0].label);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const std::size_t p = s.shape.w2_offset() + k;
    EXPECT_NEAR(next.params[p], s.params[p] - alpha * g[k], 1e-15);
  }
}

TEST(WarmupStep, SmallStepDecreasesLoss) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 20; ++t) {
    const auto s = random_state(kSmall, rng);
    auto b = random_batch(8, 4, 3, rng);
    EXPECT_LT(mean_loss(warmup_step(s, b.batch, 1e-6), b.batch), mean_loss(s, b.batch));
  }
}

TEST(WarmupStep, EmptyBatchThrows) {
  const ClassifierState<double> s(kSmall);
  EXPECT_THROW(warmup_step(s, {}, 0.1), std::invalid_argument);
}

TEST(CombinedStep, EmptyRelabeledEqualsWarmupStep) {
  std::mt19937_64 rng(14);
  const auto s = random_state(kSmall, rng);
  auto b = random_batch(7, 4, 3, rng);
  EXPECT_EQ(combined_step(s, b.batch, {}, 0.2), warmup_step(s, b.batch, 0.2));
}

TEST(CombinedStep, RelabelWithObservedLabelActsLikeClean) {
  std::mt19937_64 rng(15);
  const auto s = random_state(kSmall, rng);
  auto b = random_batch(3, 4, 3, rng);
  const Batch clean(b.batch.begin(), b.batch.begin() + 2);
  const std::vector<RelabeledExample> relabeled{{b.batch[2], Target::hard(b.batch[2].label)}};
  EXPECT_EQ(combined_step(s, clean, relabeled, 0.2), warmup_step(s, b.batch, 0.2));
}

TEST(CombinedStep, PooledDenominatorMatchesOracle) {
  std::mt19937_64 rng(16);
  const auto s = random_state(kSmall, rng);
  auto b = random_batch(3, 4, 3, rng);
  const Batch clean(b.batch.begin(), b.batch.begin() + 2);
  const std::size_t relabel_to = (b.batch[2].label + 1) % 3;
  const std::vector<RelabeledExample> relabeled{{b.batch[2], Target::hard(relabel_to)}};
  const auto fd = oracle::central_difference(
      [&](const Vec<double>& p) {
        const ClassifierState<double> h(s.shape, p);
        return (per_sample_loss(h, clean[0].input, clean[0].label) + per_sample_loss(h, clean[1].input, clean[1].label) +
                per_sample_loss(h, b.batch[2].input, relabel_to)) /
               3.0;
      },
      s.params, 1e-3, oracle::Stencil::five_point);
  EXPECT_LT(oracle::max_relative_error(pooled_mean_grad(s, clean, relabeled), fd, 1e-8), 1e-5);
  const auto next = combined_step(s, clean, relabeled, 0.5);
  const auto g = pooled_mean_grad(s, clean, relabeled);
  for (std::size_t k = 0; k < g.size(); ++k) EXPECT_EQ(next.params[k], s.params[k] - 0.5 * g[k]);
}

TEST(CombinedStep, BothEmptyThrows) {
  const ClassifierState<double> s(kSmall);
  EXPECT_THROW(combined_step(s, {}, {}, 0.1), std::invalid_argument);
}
