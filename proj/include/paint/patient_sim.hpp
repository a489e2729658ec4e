#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "paint/trajectory.hpp"

namespace paint {

inline constexpr double kGlucoseFloor = 10.0;
inline constexpr double kGlucoseCeiling = 1000.0;

enum class Cohort { kAdult, kAdolescent, kChild };

std::string to_string(Cohort cohort);
Cohort cohort_from_string(const std::string& name);

/// Compartmental glucose-insulin model parameters for one virtual patient.
///
/// Glucose follows a Bergman minimal model driven by a two-compartment
/// subcutaneous insulin depot and a two-compartment gut. Endogenous glucose
/// production is not stored: it is whatever holds `fasting_glucose_mgdl` at
/// `basal_equilibrium_u_per_min`.
struct PatientParams {
  Cohort id = Cohort::kAdult;
  double weight_kg = 70.0;
  double basal_equilibrium_u_per_min = 0.0;
  double fasting_glucose_mgdl = 120.0;
  double insulin_sensitivity = 0.0;   // remote action per mU/L, 1/min
  double glucose_effectiveness = 0.0; // 1/min
  double insulin_action_rate = 0.0;   // 1/min
  double insulin_clearance = 0.0;     // 1/min
  double t_max_insulin_min = 55.0;
  double t_max_meal_min = 40.0;
  double carb_bioavailability = 0.8;
  double carb_ratio = 10.0;        // g/U
  double correction_factor = 40.0; // mg/dL per U
  double distribution_volume_glucose = 1.6; // dL/kg
  double distribution_volume_insulin = 0.12; // L/kg

  void validate() const;

  /// Plasma insulin (mU/L) sustained by a constant basal rate.
  double steady_plasma_insulin(double basal_u_per_min) const;
  /// Endogenous glucose production (mg/dL/min) implied by the fasting equilibrium.
  double endogenous_production() const;
};

struct SimState {
  double plasma_glucose_mgdl = 0.0;
  double remote_insulin_action = 0.0;
  double sc_insulin_1 = 0.0;
  double sc_insulin_2 = 0.0;
  double plasma_insulin = 0.0;
  double gut_carb_1 = 0.0;
  double gut_carb_2 = 0.0;
  double clock_min = 0.0;
};

/// State with insulin compartments at the basal steady state, empty gut and
/// the requested glucose.
SimState basal_state(const PatientParams& params, double glucose_mgdl, double clock_min = 0.0);

/// Advances the model by `dt_min` with fixed-step RK4 on 1-minute substeps.
/// The bolus and carbs are deposited at the start of the interval.
/// `sensitivity_scale` multiplies insulin sensitivity (day-to-day variation)
/// without moving endogenous production.
SimState step(const SimState& state, const PatientParams& params, double basal_u_per_min,
              double bolus_u, double carbs_g, double dt_min = kStepMinutes,
              double sensitivity_scale = 1.0);

bool in_survivable_range(double glucose_mgdl);

struct MealSlot {
  double mean_time_of_day_min = 0.0;
  double std_time_min = 0.0;
  double mean_carbs_g = 0.0;
  double std_carbs_g = 0.0;
};

struct MealEvent {
  double clock_min = 0.0;
  double carbs_g = 0.0;
};

/// Daily meal plan; each slot is jittered independently every day.
struct MealSchedule {
  std::vector<MealSlot> slots;

  void validate() const;
  /// Meals for the day starting at `day_start_clock`, sorted by time.
  std::vector<MealEvent> realize_day(double day_start_clock, std::mt19937_64& rng) const;
};

MealSchedule default_meal_schedule(double weight_kg);

enum class FaultMode { kNone, kCompressionLow };

/// Nightly compression-low generator. Faults only ever alter the sensor reading.
struct FaultInjector {
  FaultMode mode = FaultMode::kNone;
  double nightly_probability = 0.3;
  double window_start_min = 0.0;   // time of day
  double window_end_min = 360.0;   // time of day
  double depth_min_mgdl = 30.0;
  double depth_max_mgdl = 50.0;
  double onset_min = 9.0;
  double drop_min_min = 20.0;
  double drop_max_min = 40.0;
  double rebound_min_min = 20.0;
  double rebound_max_min = 40.0;
};

/// A realized sensor fault: linear onset to `depth`, held for `hold_min`, then
/// linear rebound to zero.
struct CompressionEvent {
  double start_clock = 0.0;
  double depth_mgdl = 0.0;
  double onset_min = 0.0;
  double hold_min = 0.0;
  double rebound_min = 0.0;

  double end_clock() const { return start_clock + onset_min + hold_min + rebound_min; }
  /// Amount subtracted from the reading at `clock`.
  double depression_at(double clock) const;
};

std::vector<CompressionEvent> realize_faults(const FaultInjector& injector, double start_clock,
                                             int days, std::mt19937_64& rng);

/// CGM with AR(1) noise. Owns its noise state; one instance per episode.
class CgmSensor {
 public:
  CgmSensor(double noise_std, double noise_correlation, std::uint64_t seed);

  /// True glucose plus noise minus any active fault depression, clamped to [1, 1000].
  double read(const SimState& state, const std::vector<CompressionEvent>& faults);

 private:
  double noise_std_;
  double correlation_;
  double noise_ = 0.0;
  bool primed_ = false;
  std::mt19937_64 rng_;
};

/// Any basal policy: sees the episode so far (sample `index` has glucose, carbs
/// and bolus filled in, basal not yet) and returns U/min.
class BasalController {
 public:
  virtual ~BasalController() = default;
  virtual void reset(std::uint64_t /*seed*/) {}
  virtual double basal(const Trajectory& history, std::size_t index) = 0;
};

/// Mealtime bolus hook: called only on samples with carbs > 0.
using BolusFn = std::function<double(const Trajectory& history, std::size_t index)>;

struct EpisodeConfig {
  int days = 10;
  std::uint64_t seed = 0;
  std::int64_t episode_id = 0;
  std::string patient_id;
  double cgm_noise_std = 2.0;
  double cgm_noise_correlation = 0.7;
  double start_glucose_jitter = 20.0;
  /// Log-normal spread of the daily insulin-sensitivity multiplier.
  double daily_sensitivity_std = 0.25;
  /// Optional cap on the number of samples (truncates, does not terminate).
  std::optional<std::size_t> max_samples;
};

Trajectory run_episode(const PatientParams& params, BasalController& controller,
                       const BolusFn& bolus, const MealSchedule& schedule,
                       const FaultInjector& faults, const EpisodeConfig& config);

/// Derives an independent stream seed from a master seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace paint
