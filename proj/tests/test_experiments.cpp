#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "paint/error.hpp"
#include "paint/experiments.hpp"
#include "paint/workflow.hpp"
#include "test_support.hpp"

using namespace paint;
using paint::testing::TempDir;

namespace {

ExperimentOptions tiny_options(const std::string& cache) {
  ExperimentOptions o;
  o.scale.samples = 1500;
  o.scale.labels = 200;
  o.scale.patients = {"adult"};
  o.scale.seeds = {1};
  o.scale.eval_days = 1;
  o.scale.eval_repeats = 1;
  o.scale.td3 = paint::testing::tiny_td3(1);
  o.scale.reward.hidden = {8, 8};
  o.scale.reward.max_epochs = 3;
  o.cache_dir = cache;
  return o;
}

}  // namespace

TEST(Labels, CorruptionNegatesExactFraction) {
  std::vector<double> l(100);
  for (std::size_t i = 0; i < l.size(); ++i) l[i] = 0.01 * static_cast<double>(i + 1);
  auto c = l;
  corrupt_labels(c, 0.4, 3);
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < l.size(); ++i) {
    EXPECT_DOUBLE_EQ(std::fabs(c[i]), l[i]);
    flipped += c[i] < 0.0;
  }
  EXPECT_EQ(flipped, 40u);
  auto all = l;
  corrupt_labels(all, 1.0, 3);
  for (std::size_t i = 0; i < l.size(); ++i) EXPECT_EQ(all[i], -l[i]);
  EXPECT_THROW(corrupt_labels(all, 1.5, 3), Error);
}

TEST(Labels, NoiseScalesWithLabelSpreadAndClamps) {
  std::vector<double> l(20000);
  for (std::size_t i = 0; i < l.size(); ++i) l[i] = (i % 2 ? 0.1 : -0.1);
  auto n = l;
  add_label_noise(n, 1.0, 4);
  double var = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) var += (n[i] - l[i]) * (n[i] - l[i]);
  EXPECT_NEAR(std::sqrt(var / static_cast<double>(l.size())), 0.1, 0.005);
  auto big = l;
  add_label_noise(big, 30.0, 4);
  for (double x : big) {
    EXPECT_GE(x, -1.0);
    EXPECT_LE(x, 1.0);
  }
  auto zero = l;
  add_label_noise(zero, 0.0, 4);
  EXPECT_EQ(zero, l);
}

TEST(Labels, SimulatedLabelsAreNormalized) {
  const auto data = paint::testing::small_dataset(3000, 2, 2);
  LabelPlan plan{PreferenceFn::from_name("cov1"), 1000, 0.0, 0.0};
  const auto set = simulate_labels(data, plan, 9);
  ASSERT_EQ(set.size(), 1000u);
  double lo = 2.0, hi = -2.0;
  for (const auto& l : set.labels()) {
    lo = std::min(lo, l.reward);
    hi = std::max(hi, l.reward);
  }
  EXPECT_DOUBLE_EQ(lo, -1.0);
  EXPECT_DOUBLE_EQ(hi, 1.0);
  EXPECT_EQ(simulate_labels(data, plan, 9).labels().size(), set.labels().size());
}

TEST(Downsample, EvenlySpacedWithEndpoints) {
  EXPECT_EQ(downsample_indices(10, 0).size(), 10u);
  EXPECT_EQ(downsample_indices(10, 20).size(), 10u);
  EXPECT_EQ(downsample_indices(10, 1), std::vector<std::size_t>{0});
  const auto d = downsample_indices(4800, 500);
  ASSERT_EQ(d.size(), 500u);
  EXPECT_EQ(d.front(), 0u);
  EXPECT_EQ(d.back(), 4799u);
  EXPECT_TRUE(std::is_sorted(d.begin(), d.end()));
  EXPECT_EQ(std::adjacent_find(d.begin(), d.end()), d.end());
}

TEST(Goals, MetricLookup) {
  ReportSummary s;
  s.tir_pct = 80.0;
  s.tbr_pct = 2.0;
  s.cov_pct = 30.0;
  EXPECT_EQ(metric_of(s, "tir"), 80.0);
  EXPECT_EQ(metric_of(s, "tbr"), 2.0);
  EXPECT_EQ(metric_of(s, "cov"), 30.0);
  EXPECT_THROW(metric_of(s, "x"), Error);
  ASSERT_EQ(common_goals().size(), 3u);
  EXPECT_TRUE(common_goals()[0].increase);
  EXPECT_FALSE(common_goals()[1].increase);
}

TEST(Experiments, UnknownNameThrows) {
  EXPECT_THROW(run_experiment("nope", tiny_options("")), Error);
}

TEST(Experiments, TinyRunIsReproducible) {
  TempDir dir("paint-exp");
  const auto a = run_experiment("mealtimes", tiny_options(dir.str()));
  const auto b = run_experiment("mealtimes", tiny_options(""));
  EXPECT_EQ(a.experiment, "mealtimes");
  EXPECT_FALSE(a.rows.empty());
  EXPECT_EQ(a.to_jsonl(), b.to_jsonl());
  EXPECT_FALSE(a.to_text().empty());
}
