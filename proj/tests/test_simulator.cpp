#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "paint/controllers.hpp"
#include "paint/error.hpp"
#include "paint/patient_config.hpp"
#include "paint/patient_sim.hpp"
#include "test_support.hpp"

using namespace paint;

namespace {

Trajectory run_constant(const PatientProfile& p, double rate, std::uint64_t seed, int days = 1) {
  ConstantController c(rate);
  EpisodeConfig ec;
  ec.days = days;
  ec.seed = seed;
  ec.patient_id = "adult";
  return run_episode(p.params, c, [](const Trajectory&, std::size_t) { return 0.0; }, MealSchedule{}, {}, ec);
}

}  // namespace

TEST(Simulator, BasalEquilibriumHoldsFastingGlucose) {
  const auto p = load_patient("adult");
  SimState s = basal_state(p.params, p.params.fasting_glucose_mgdl);
  for (int i = 0; i < 480; ++i) s = step(s, p.params, p.params.basal_equilibrium_u_per_min, 0.0, 0.0);
  EXPECT_NEAR(s.plasma_glucose_mgdl, p.params.fasting_glucose_mgdl, 1e-6);
  EXPECT_NEAR(s.clock_min, 480 * kStepMinutes, 1e-9);
}

TEST(Simulator, CarbsRaiseAndInsulinLowersGlucose) {
  const auto p = load_patient("adult");
  const SimState s0 = basal_state(p.params, 120.0);
  SimState meal = step(s0, p.params, p.params.basal_equilibrium_u_per_min, 0.0, 60.0);
  SimState dose = step(s0, p.params, p.params.basal_equilibrium_u_per_min, 5.0, 0.0);
  for (int i = 0; i < 40; ++i) {
    meal = step(meal, p.params, p.params.basal_equilibrium_u_per_min, 0.0, 0.0);
    dose = step(dose, p.params, p.params.basal_equilibrium_u_per_min, 0.0, 0.0);
  }
  EXPECT_GT(meal.plasma_glucose_mgdl, 150.0);
  EXPECT_LT(dose.plasma_glucose_mgdl, 100.0);
}

TEST(Simulator, SubstepRefinementConverges) {
  // Three 1-minute steps equal one 3-minute step (RK4 runs on 1-minute substeps).
  const auto p = load_patient("adolescent");
  SimState a = step(basal_state(p.params, 180.0), p.params, 0.02, 1.0, 30.0);
  SimState b = step(basal_state(p.params, 180.0), p.params, 0.02, 1.0, 30.0, 1.0);
  b = step(b, p.params, 0.02, 0.0, 0.0, 1.0);
  b = step(b, p.params, 0.02, 0.0, 0.0, 1.0);
  EXPECT_NEAR(a.plasma_glucose_mgdl, b.plasma_glucose_mgdl, 1e-9);
}

TEST(Simulator, EpisodeIsDeterministicAndOnGrid) {
  const auto p = load_patient("adult");
  const auto a = run_constant(p, p.params.basal_equilibrium_u_per_min, 11);
  const auto b = run_constant(p, p.params.basal_equilibrium_u_per_min, 11);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(a.size(), kStepsPerDay);
  EXPECT_NO_THROW(a.validate());
  const auto c = run_constant(p, p.params.basal_equilibrium_u_per_min, 12);
  EXPECT_FALSE(a == c);
}

TEST(Simulator, OverdoseTerminatesEpisode) {
  const auto p = load_patient("child");
  const auto tr = run_constant(p, 50.0 * p.params.basal_equilibrium_u_per_min, 3, 3);
  EXPECT_TRUE(tr.terminated);
  EXPECT_LT(tr.size(), 3 * kStepsPerDay);
  EXPECT_FALSE(in_survivable_range(tr.true_glucose.back()) && tr.size() == 3 * kStepsPerDay);
}

TEST(Simulator, DeriveSeedStreamsDiffer) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 1000; ++s) seen.insert(derive_seed(42, s));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_EQ(derive_seed(1, 2), derive_seed(1, 2));
}

TEST(Simulator, CompressionFaultsStayInNightWindow) {
  FaultInjector f;
  f.mode = FaultMode::kCompressionLow;
  f.nightly_probability = 1.0;
  std::mt19937_64 rng(4);
  const auto events = realize_faults(f, 0.0, 10, rng);
  EXPECT_GE(events.size(), 10u);
  EXPECT_LE(events.size(), 11u);
  for (const auto& e : events) {
    const double tod = std::fmod(e.start_clock, kMinutesPerDay);
    EXPECT_GE(tod, f.window_start_min);
    EXPECT_LE(tod, f.window_end_min);
    EXPECT_GE(e.depth_mgdl, f.depth_min_mgdl);
    EXPECT_LE(e.depth_mgdl, f.depth_max_mgdl);
    EXPECT_DOUBLE_EQ(e.depression_at(e.start_clock - 1.0), 0.0);
    EXPECT_NEAR(e.depression_at(e.start_clock + e.onset_min + 0.5 * e.hold_min), e.depth_mgdl, 1e-9);
    EXPECT_DOUBLE_EQ(e.depression_at(e.end_clock() + 1.0), 0.0);
  }
}

TEST(Simulator, FaultsOnlyTouchTheSensor) {
  const auto p = load_patient("adult");
  FaultInjector f = default_faults();
  f.nightly_probability = 1.0;
  EpisodeConfig ec;
  ec.days = 2;
  ec.seed = 8;
  ec.cgm_noise_std = 0.0;
  ConstantController c1(p.params.basal_equilibrium_u_per_min), c2(p.params.basal_equilibrium_u_per_min);
  auto none = [](const Trajectory&, std::size_t) { return 0.0; };
  const auto clean = run_episode(p.params, c1, none, p.meals, {}, ec);
  const auto faulty = run_episode(p.params, c2, none, p.meals, f, ec);
  EXPECT_EQ(clean.true_glucose, faulty.true_glucose);
  EXPECT_FALSE(faulty.fault_onsets.empty());
  EXPECT_LT(faulty.glucose[faulty.fault_onsets[0] + 5], clean.glucose[faulty.fault_onsets[0] + 5]);
}

TEST(Pid, LawMatchesHandFormula) {
  const PidGains g{2e-4, 1e-6, 3e-3};
  EXPECT_DOUBLE_EQ(pid_law(g, 180.0, 170.0, 500.0, 140.0), 2e-4 * 40.0 + 1e-6 * 500.0 + 3e-3 * 10.0);
}

TEST(Pid, MoreInsulinWhenHigh) {
  const auto p = load_patient("adult");
  PidController hi(p.pid, false), lo(p.pid, false);
  hi.reset(1);
  lo.reset(1);
  auto high = paint::testing::make_trace(std::vector<double>(20, 220.0));
  auto low = paint::testing::make_trace(std::vector<double>(20, 90.0));
  double bh = 0.0, bl = 0.0;
  for (std::size_t i = 0; i < 20; ++i) {
    bh = hi.basal(high, i);
    bl = lo.basal(low, i);
  }
  EXPECT_GT(bh, bl);
  EXPECT_GE(bl, 0.0);
  EXPECT_LE(bh, p.pid.max_basal);
}

TEST(Bolus, CarbRatioAndCorrection) {
  BolusConfig c;
  c.carb_ratio = 10.0;
  c.correction_factor = 40.0;
  c.carb_estimate_error_frac = 0.0;
  std::mt19937_64 rng(1);
  EXPECT_DOUBLE_EQ(bolus(50.0, 140.0, 0.0, c, rng), 5.0);
  EXPECT_DOUBLE_EQ(bolus(50.0, 220.0, 0.0, c, rng), 7.0);
  EXPECT_DOUBLE_EQ(bolus(50.0, 220.0, 30.0, c, rng), 5.0);
}

TEST(PatientConfig, LoadsAllCohortsAndRejectsUnknown) {
  for (const char* id : {"adult", "adolescent", "child"}) {
    const auto p = load_patient(id);
    EXPECT_NO_THROW(p.params.validate());
    EXPECT_NO_THROW(p.pid.validate());
    EXPECT_GT(p.pid.max_basal, p.params.basal_equilibrium_u_per_min);
  }
  EXPECT_THROW(load_patient("elderly"), Error);
  EXPECT_THROW(KeyValueFile::parse("[a]\nnot a pair\n"), Error);
}
