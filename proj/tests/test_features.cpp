#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "paint/features.hpp"
#include "paint/patient_config.hpp"
#include "test_support.hpp"

using namespace paint;

namespace {

double argmax_activity(const ActivityCurve& c) {
  double best_t = 0.0, best = -1.0;
  for (double t = 0.0; t <= c.duration(); t += 0.01) {
    const double a = c.activity(t);
    if (a > best) {
      best = a;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace

TEST(Activity, EndpointsAreExactlyZero) {
  for (const auto& c : {insulin_activity_curve(), carb_activity_curve()}) {
    EXPECT_EQ(c.activity(0.0), 0.0);
    EXPECT_EQ(c.activity(c.duration()), 0.0);
    EXPECT_EQ(c.activity(-3.0), 0.0);
    EXPECT_EQ(c.activity(c.duration() + 3.0), 0.0);
    EXPECT_DOUBLE_EQ(c.remaining(0.0), 1.0);
    EXPECT_DOUBLE_EQ(c.remaining(c.duration()), 0.0);
  }
}

TEST(Activity, PeakNearConfiguredTime) {
  const auto ins = insulin_activity_curve();
  const auto carb = carb_activity_curve();
  EXPECT_DOUBLE_EQ(ins.peak(), 55.0);
  EXPECT_DOUBLE_EQ(ins.duration(), 240.0);
  EXPECT_DOUBLE_EQ(carb.peak(), 40.0);
  EXPECT_DOUBLE_EQ(carb.duration(), 210.0);
  EXPECT_NEAR(argmax_activity(ins), 55.0, 5.0);
  EXPECT_NEAR(argmax_activity(carb), 40.0, 5.0);
}

TEST(Activity, IntegratesToOneAndMatchesRemaining) {
  const auto c = insulin_activity_curve();
  double area = 0.0;
  const double h = 0.01;
  for (double t = 0.0; t < c.duration(); t += h) area += 0.5 * h * (c.activity(t) + c.activity(t + h));
  EXPECT_NEAR(area, 1.0, 1e-4);
  double part = 0.0;
  for (double t = 0.0; t < 90.0 - 1e-9; t += h) part += 0.5 * h * (c.activity(t) + c.activity(t + h));
  EXPECT_NEAR(c.remaining(90.0), 1.0 - part, 1e-4);
}

TEST(Activity, OnBoardOfFreshDoseIsTheDose) {
  const auto c = insulin_activity_curve();
  EXPECT_DOUBLE_EQ(on_board(std::vector<double>{2.5}, c), 2.5);
  std::vector<double> doses(100, 0.0);
  doses[0] = 3.0;  // 99 samples old = 297 min, past the duration
  EXPECT_DOUBLE_EQ(on_board(doses, c), 0.0);
}

TEST(Features, WindowMeansMatchLoopOracle) {
  auto tr = paint::testing::make_trace(std::vector<double>(200, 0.0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(60.0, 300.0), b(0.0, 0.05);
  for (std::size_t i = 0; i < tr.size(); ++i) {
    tr.glucose[i] = tr.true_glucose[i] = u(rng);
    tr.basal[i] = b(rng);
  }
  const auto p = load_patient("adult");
  const std::size_t idx = 150;
  const auto s = build_state(tr, idx, p.params);
  EXPECT_DOUBLE_EQ(s[feature::kGlucose], tr.glucose[idx]);
  for (std::size_t w = 0; w < kHistoryWindows; ++w) {
    double gs = 0.0, is = 0.0;
    for (std::size_t k = 0; k < kWindowSamples; ++k) {
      gs += tr.glucose[idx - w * kWindowSamples - k];
      const std::size_t j = idx - 1 - w * kWindowSamples - k;
      is += tr.basal[j] + tr.bolus[j] / kStepMinutes;
    }
    EXPECT_NEAR(s[feature::kGlucoseMeans + w], gs / kWindowSamples, 1e-9) << w;
    EXPECT_NEAR(s[feature::kInsulinMeans + w], is / kWindowSamples, 1e-12) << w;
  }
  EXPECT_DOUBLE_EQ(s[feature::kWeight], p.params.weight_kg);
}

TEST(Features, BatchMatchesSingle) {
  const auto data = paint::testing::small_dataset(1200, 2, 1);
  const auto& tr = data.episodes.front();
  const auto all = build_states(tr, data.params);
  for (std::size_t i : {0ul, 1ul, 9ul, 10ul, 79ul, 80ul, 81ul, 400ul}) {
    const auto one = build_state(tr, i, data.params);
    for (std::size_t k = 0; k < kStateDim; ++k) EXPECT_NEAR(all[i][k], one[k], 1e-12) << i << ' ' << k;
  }
}

TEST(Features, NormalizerRoundTrip) {
  const auto data = paint::testing::small_dataset(1000, 4, 1);
  const auto n = Normalizer::fit(data.states);
  const auto z = n.normalize(data.states[123]);
  const auto back = n.denormalize(z);
  for (std::size_t k = 0; k < kStateDim; ++k) EXPECT_NEAR(back[k], data.states[123][k], 1e-9);
  double mean0 = 0.0;
  for (const auto& s : data.states) mean0 += n.normalize(s)[0];
  EXPECT_NEAR(mean0 / static_cast<double>(data.states.size()), 0.0, 1e-9);
}
