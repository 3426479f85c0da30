#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "metasel/checkpoint.hpp"
#include "metasel/csv.hpp"
#include "metasel/dataset_io.hpp"
#include "metasel/noise_synth.hpp"
#include "metasel/trainer.hpp"
#include "metasel/types.hpp"

using namespace metasel;

namespace {

bool has(const std::vector<std::string>& v, const std::string& s) { return std::find(v.begin(), v.end(), s) != v.end(); }

}  // namespace

TEST(ValidateConfig, PublishedDefaultsAreValid) {
  TrainConfig c;
  c.drop_rate = 0.35;
  c.relabel_rate = 0.05;
  c.warmup_epochs = 5;
  c.total_epochs = 100;
  EXPECT_TRUE(validate_config(c).empty());
}

TEST(ValidateConfig, DropRateOfOneIsRejected) {
  TrainConfig c;
  c.drop_rate = 1.0;
  EXPECT_TRUE(has(validate_config(c), "drop_rate must be < 1"));
}

TEST(ValidateConfig, WarmupMustPrecedeTotal) {
  TrainConfig c;
  c.warmup_epochs = 100;
  c.total_epochs = 100;
  EXPECT_TRUE(has(validate_config(c), "warmup must precede total epochs"));
  // The trainer accepts the same config as a pure-warmup run.
  EXPECT_TRUE(training_violations(c).empty());
}

TEST(ValidateConfig, ReportsEveryViolation) {
  TrainConfig c;
  c.drop_rate = -0.1;
  c.relabel_rate = 1.5;
  c.batch_size = 1;
  c.lr_selection = 0.0;
  c.num_classes = 1;
  const auto v = validate_config(c);
  EXPECT_TRUE(has(v, "drop_rate must be >= 0"));
  EXPECT_TRUE(has(v, "relabel_rate must be in [0, 1]"));
  EXPECT_TRUE(has(v, "batch_size must be >= 2"));
  EXPECT_TRUE(has(v, "lr_selection must be > 0"));
  EXPECT_TRUE(has(v, "num_classes must be >= 2"));
}

TEST(NoiseTag, TrueLabelOnlyForInDist) {
  EXPECT_EQ(NoiseTag::in_dist(3).true_label(), 3u);
  EXPECT_THROW(NoiseTag::clean().true_label(), std::logic_error);
  EXPECT_THROW(NoiseTag::out_dist().true_label(), std::logic_error);
  Sample s{7, {0.0}, 1, NoiseTag::in_dist(2)};
  EXPECT_EQ(s.true_class(), 2u);
  s.truth = NoiseTag::clean();
  EXPECT_EQ(s.true_class(), 1u);
}

TEST(Dataset, RejectsBrokenInvariants) {
  EXPECT_THROW(Dataset(3, 2, {{0, {0.0, 0.0}, 3, NoiseTag::clean()}}), std::invalid_argument);
  EXPECT_THROW(Dataset(3, 2, {{0, {0.0}, 0, NoiseTag::clean()}}), std::invalid_argument);
  EXPECT_THROW(Dataset(3, 2, {{0, {0.0, std::nan("")}, 0, NoiseTag::clean()}}), std::invalid_argument);
  EXPECT_THROW(Dataset(3, 2, {{0, {0.0, 0.0}, 1, NoiseTag::in_dist(1)}}), std::invalid_argument);
  EXPECT_THROW(Dataset(3, 2, {{4, {0.0, 0.0}, 0, NoiseTag::clean()}, {4, {1.0, 0.0}, 1, NoiseTag::clean()}}),
               std::invalid_argument);
  EXPECT_THROW(Dataset(1, 2), std::invalid_argument);
}

TEST(Dataset, ExamplesCarryNoTagsAndAliasInputs) {
  const Dataset d(2, 2, {{5, {1.0, 2.0}, 1, NoiseTag::in_dist(0)}, {6, {3.0, 4.0}, 0, NoiseTag::out_dist()}});
  const auto ex = d.examples();
  ASSERT_EQ(ex.size(), 2u);
  EXPECT_EQ(ex[0].id, 5u);
  EXPECT_EQ(ex[0].label, 1u);
  EXPECT_EQ(ex[0].input.data(), d[0].input.data());
  EXPECT_EQ(d.count(NoiseKind::in_dist), 1u);
  EXPECT_EQ(d.count(NoiseKind::out_dist), 1u);
  EXPECT_FALSE(d.all_clean());
  EXPECT_TRUE(strip_tags(d).all_clean());
  EXPECT_EQ(strip_tags(d)[0].observed_label, 1u);
}

TEST(Dataset, ConcatKeepsIdsUnique) {
  const Dataset a(2, 1, {{0, {0.0}, 0, NoiseTag::clean()}});
  const Dataset b(2, 1, {{1, {1.0}, 1, NoiseTag::clean()}});
  EXPECT_EQ(concat(a, b).size(), 2u);
  EXPECT_THROW(concat(a, a), std::invalid_argument);
  EXPECT_THROW(concat(a, Dataset(3, 1)), std::invalid_argument);
}

TEST(DatasetIo, RoundTripIsBitIdentical) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01;
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < 50; ++i) {
    Sample s;
    s.id = 3 * i + 1;
    s.input = {n01(rng), n01(rng) * 1e-300, n01(rng) * 1e300, 0.1 + 0.2};
    s.observed_label = i % 3;
    if (i % 5 == 0) s.truth = NoiseTag::in_dist((i + 1) % 3);
    if (i % 7 == 0) s.truth = NoiseTag::out_dist();
    samples.push_back(s);
  }
  samples[1].input[0] = -0.0;
  samples[2].input[0] = std::numeric_limits<double>::denorm_min();
  const Dataset d(3, 4, samples);
  std::stringstream ss;
  write_dataset(ss, d);
  const auto back = read_dataset(ss);
  EXPECT_EQ(back, d);
  EXPECT_TRUE(std::signbit(back[1].input[0]));
}

TEST(DatasetIo, RejectsMalformedInput) {
  std::istringstream bad_header("not-a-dataset,1,2,1\n");
  EXPECT_THROW(read_dataset(bad_header), std::runtime_error);
  std::istringstream bad_version("metasel-dataset,9,2,1\n");
  EXPECT_THROW(read_dataset(bad_version), std::runtime_error);
  std::istringstream bad_row("metasel-dataset,1,2,2\n0,1,clean,0.5\n");
  EXPECT_THROW(read_dataset(bad_row), std::runtime_error);
  std::istringstream bad_tag("metasel-dataset,1,2,1\n0,1,weird,0.5\n");
  EXPECT_THROW(read_dataset(bad_tag), std::runtime_error);
}

TEST(DatasetIo, TagFormat) {
  EXPECT_EQ(format_tag(NoiseTag::clean()), "clean");
  EXPECT_EQ(format_tag(NoiseTag::out_dist()), "out");
  EXPECT_EQ(format_tag(NoiseTag::in_dist(4)), "in:4");
  EXPECT_EQ(parse_tag("in:4"), NoiseTag::in_dist(4));
}

TEST(Csv, RoundTripPreservesNumbersAndNan) {
  CsvTable t;
  t.header = {"a", "b"};
  t.rows = {{format_double(0.1 + 0.2), format_double(std::nan(""))}, {format_double(-1e-310), "x"}};
  std::stringstream ss;
  write_csv(ss, t);
  const auto back = read_csv(ss);
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.numbers("a")[0], 0.1 + 0.2);
  EXPECT_TRUE(std::isnan(parse_double(back.rows[0][1])));
  EXPECT_EQ(back.strings("b")[1], "x");
  EXPECT_THROW(back.column("c"), std::out_of_range);
}

TEST(Csv, RaggedRowsAreRejected) {
  std::istringstream is("a,b\n1\n");
  EXPECT_THROW(read_csv(is), std::runtime_error);
}

TEST(Method, NamesRoundTrip) {
  for (Method m : {Method::full, Method::discard_only, Method::no_relabel, Method::self_correct, Method::plain}) {
    EXPECT_EQ(parse_method(to_string(m)), m);
  }
  EXPECT_THROW(parse_method("distillation"), std::invalid_argument);
  EXPECT_EQ(parse_pseudo_label_mode("soft"), PseudoLabelMode::soft);
  EXPECT_THROW(parse_pseudo_label_mode("fuzzy"), std::invalid_argument);
}

TEST(Checkpoint, RoundTripRestoresEveryParameter) {
  TrainConfig c;
  c.num_classes = 4;
  c.feature_dim = 5;
  c.selection_hidden = 7;
  c.seed = 9;
  const auto m = init_model(3, c);
  std::stringstream ss;
  write_checkpoint(ss, m);
  EXPECT_EQ(read_checkpoint(ss), m);
}

TEST(Checkpoint, RejectsWrongHeaderAndMissingArrays) {
  std::istringstream bad("something 1\n");
  EXPECT_THROW(read_checkpoint(bad), std::runtime_error);
  std::istringstream partial("metasel-checkpoint 1\nclassifier.feature_weights 1 1\n0.5\n");
  EXPECT_THROW(read_checkpoint(partial), std::runtime_error);
}
