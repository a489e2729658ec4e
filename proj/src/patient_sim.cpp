#include "paint/patient_sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "paint/error.hpp"

namespace paint {

std::string to_string(Cohort cohort) {
  switch (cohort) {
    case Cohort::kAdult: return "adult";
    case Cohort::kAdolescent: return "adolescent";
    case Cohort::kChild: return "child";
  }
  return "adult";
}

Cohort cohort_from_string(const std::string& name) {
  if (name == "adult") return Cohort::kAdult;
  if (name == "adolescent") return Cohort::kAdolescent;
  if (name == "child") return Cohort::kChild;
  throw Error(ErrorCode::kNotFound, "unknown patient id '" + name + "'");
}

void PatientParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::kInvalidArgument, std::string(name) + " must be positive");
    }
  };
  positive(weight_kg, "weight_kg");
  positive(basal_equilibrium_u_per_min, "basal_equilibrium_u_per_min");
  positive(fasting_glucose_mgdl, "fasting_glucose_mgdl");
  positive(insulin_sensitivity, "insulin_sensitivity");
  positive(glucose_effectiveness, "glucose_effectiveness");
  positive(insulin_action_rate, "insulin_action_rate");
  positive(insulin_clearance, "insulin_clearance");
  positive(t_max_insulin_min, "t_max_insulin_min");
  positive(t_max_meal_min, "t_max_meal_min");
  positive(carb_ratio, "carb_ratio");
  positive(correction_factor, "correction_factor");
  positive(distribution_volume_glucose, "distribution_volume_glucose");
  positive(distribution_volume_insulin, "distribution_volume_insulin");
  if (!(carb_bioavailability > 0.0 && carb_bioavailability <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "carb_bioavailability must lie in (0, 1]");
  }
}

double PatientParams::steady_plasma_insulin(double basal_u_per_min) const {
  return basal_u_per_min * 1000.0 /
         (distribution_volume_insulin * weight_kg * insulin_clearance);
}

double PatientParams::endogenous_production() const {
  const double action = insulin_sensitivity * steady_plasma_insulin(basal_equilibrium_u_per_min);
  return (glucose_effectiveness + action) * fasting_glucose_mgdl;
}

SimState basal_state(const PatientParams& params, double glucose_mgdl, double clock_min) {
  const double u = params.basal_equilibrium_u_per_min;
  SimState s;
  s.plasma_glucose_mgdl = glucose_mgdl;
  s.sc_insulin_1 = u * params.t_max_insulin_min;
  s.sc_insulin_2 = u * params.t_max_insulin_min;
  s.plasma_insulin = params.steady_plasma_insulin(u);
  s.remote_insulin_action = params.insulin_sensitivity * s.plasma_insulin;
  s.clock_min = clock_min;
  return s;
}

namespace {

using Vec = std::array<double, 7>;

// Order: G, X, S1, S2, I, D1, D2.
Vec to_vec(const SimState& s) {
  return {s.plasma_glucose_mgdl, s.remote_insulin_action, s.sc_insulin_1, s.sc_insulin_2,
          s.plasma_insulin,      s.gut_carb_1,            s.gut_carb_2};
}

struct Derivative {
  const PatientParams& p;
  double basal;
  double egp;
  double sensitivity;

  Vec operator()(const Vec& y) const {
    const double g = y[0], x = y[1], s1 = y[2], s2 = y[3], i = y[4], d1 = y[5], d2 = y[6];
    const double ti = p.t_max_insulin_min;
    const double tg = p.t_max_meal_min;
    const double appearance =
        p.carb_bioavailability * d2 / tg * 1000.0 / (p.distribution_volume_glucose * p.weight_kg);
    Vec dy;
    dy[0] = -(p.glucose_effectiveness + x) * g + egp + appearance;
    dy[1] = p.insulin_action_rate * (sensitivity * i - x);
    dy[2] = basal - s1 / ti;
    dy[3] = (s1 - s2) / ti;
    dy[4] = 1000.0 * s2 / (ti * p.distribution_volume_insulin * p.weight_kg) -
            p.insulin_clearance * i;
    dy[5] = -d1 / tg;
    dy[6] = (d1 - d2) / tg;
    return dy;
  }
};

Vec axpy(const Vec& y, double h, const Vec& k) {
  Vec out;
  for (std::size_t j = 0; j < y.size(); ++j) out[j] = y[j] + h * k[j];
  return out;
}

}  // namespace

SimState step(const SimState& state, const PatientParams& params, double basal_u_per_min,
              double bolus_u, double carbs_g, double dt_min, double sensitivity_scale) {
  if (basal_u_per_min < 0.0 || bolus_u < 0.0 || carbs_g < 0.0 || !(dt_min > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "step inputs must be non-negative");
  }
  Vec y = to_vec(state);
  y[2] += bolus_u;
  y[5] += carbs_g;

  if (!(sensitivity_scale > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "sensitivity scale must be positive");
  }
  const Derivative f{params, basal_u_per_min, params.endogenous_production(),
                     params.insulin_sensitivity * sensitivity_scale};
  const int substeps = std::max(1, static_cast<int>(std::lround(dt_min)));
  const double h = dt_min / substeps;
  for (int k = 0; k < substeps; ++k) {
    const Vec k1 = f(y);
    const Vec k2 = f(axpy(y, h / 2, k1));
    const Vec k3 = f(axpy(y, h / 2, k2));
    const Vec k4 = f(axpy(y, h, k3));
    for (std::size_t j = 0; j < y.size(); ++j) {
      y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kSimulationFault, "non-finite simulator state");
  }
  // Compartment masses cannot go negative; clip round-off.
  for (std::size_t j = 1; j < y.size(); ++j) y[j] = std::max(0.0, y[j]);

  SimState out;
  out.plasma_glucose_mgdl = y[0];
  out.remote_insulin_action = y[1];
  out.sc_insulin_1 = y[2];
  out.sc_insulin_2 = y[3];
  out.plasma_insulin = y[4];
  out.gut_carb_1 = y[5];
  out.gut_carb_2 = y[6];
  out.clock_min = state.clock_min + dt_min;
  return out;
}

bool in_survivable_range(double glucose_mgdl) {
  return glucose_mgdl >= kGlucoseFloor && glucose_mgdl <= kGlucoseCeiling;
}

void MealSchedule::validate() const {
  for (const auto& slot : slots) {
    if (slot.mean_time_of_day_min < 0.0 || slot.mean_time_of_day_min >= kMinutesPerDay) {
      throw Error(ErrorCode::kInvalidArgument, "meal time must lie in [0, 1440)");
    }
    if (slot.std_time_min < 0.0 || slot.std_carbs_g < 0.0 || slot.mean_carbs_g < 0.0) {
      throw Error(ErrorCode::kInvalidArgument, "meal spreads and sizes must be non-negative");
    }
  }
}

std::vector<MealEvent> MealSchedule::realize_day(double day_start_clock,
                                                 std::mt19937_64& rng) const {
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<MealEvent> meals;
  meals.reserve(slots.size());
  for (const auto& slot : slots) {
    double tod = slot.mean_time_of_day_min + slot.std_time_min * unit(rng);
    tod = std::clamp(tod, 0.0, kMinutesPerDay - kStepMinutes);
    const double carbs = std::max(0.0, slot.mean_carbs_g + slot.std_carbs_g * unit(rng));
    meals.push_back({day_start_clock + tod, carbs});
  }
  std::sort(meals.begin(), meals.end(),
            [](const MealEvent& a, const MealEvent& b) { return a.clock_min < b.clock_min; });
  return meals;
}

MealSchedule default_meal_schedule(double weight_kg) {
  const double scale = std::clamp(weight_kg / 70.0, 0.4, 1.2);
  MealSchedule schedule;
  schedule.slots = {
      {7.0 * 60.0, 20.0, 45.0 * scale, 8.0 * scale},
      {12.5 * 60.0, 20.0, 65.0 * scale, 10.0 * scale},
      {18.5 * 60.0, 20.0, 75.0 * scale, 10.0 * scale},
  };
  return schedule;
}

double CompressionEvent::depression_at(double clock) const {
  const double dt = clock - start_clock;
  if (dt < 0.0) return 0.0;
  if (dt < onset_min) return depth_mgdl * dt / onset_min;
  if (dt < onset_min + hold_min) return depth_mgdl;
  const double r = dt - onset_min - hold_min;
  if (r < rebound_min) return depth_mgdl * (1.0 - r / rebound_min);
  return 0.0;
}

std::vector<CompressionEvent> realize_faults(const FaultInjector& injector, double start_clock,
                                             int days, std::mt19937_64& rng) {
  std::vector<CompressionEvent> events;
  if (injector.mode == FaultMode::kNone) return events;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double first_day = std::floor(start_clock / kMinutesPerDay);
  // One extra night covers episodes that do not start at midnight.
  for (int d = 0; d <= days; ++d) {
    const double day_start = (first_day + d) * kMinutesPerDay;
    const bool fires = u01(rng) < injector.nightly_probability;
    const double when = injector.window_start_min +
                        u01(rng) * (injector.window_end_min - injector.window_start_min);
    CompressionEvent ev;
    ev.start_clock = day_start + when;
    ev.depth_mgdl = injector.depth_min_mgdl +
                    u01(rng) * (injector.depth_max_mgdl - injector.depth_min_mgdl);
    ev.onset_min = injector.onset_min;
    ev.hold_min = injector.drop_min_min + u01(rng) * (injector.drop_max_min - injector.drop_min_min);
    ev.rebound_min = injector.rebound_min_min +
                     u01(rng) * (injector.rebound_max_min - injector.rebound_min_min);
    if (fires && ev.start_clock >= start_clock) events.push_back(ev);
  }
  return events;
}

CgmSensor::CgmSensor(double noise_std, double noise_correlation, std::uint64_t seed)
    : noise_std_(noise_std), correlation_(noise_correlation), rng_(seed) {}

double CgmSensor::read(const SimState& state, const std::vector<CompressionEvent>& faults) {
  std::normal_distribution<double> unit(0.0, 1.0);
  if (noise_std_ > 0.0) {
    if (!primed_) {
      noise_ = noise_std_ * unit(rng_);
      primed_ = true;
    } else {
      const double innovation = noise_std_ * std::sqrt(1.0 - correlation_ * correlation_);
      noise_ = correlation_ * noise_ + innovation * unit(rng_);
    }
  }
  double depression = 0.0;
  for (const auto& ev : faults) depression = std::max(depression, ev.depression_at(state.clock_min));
  return std::clamp(state.plasma_glucose_mgdl + noise_ - depression, 1.0, 1000.0);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {
enum Stream : std::uint64_t {
  kStart = 1,
  kMeals = 2,
  kSensor = 3,
  kFaults = 4,
  kController = 5,
  kSensitivity = 6,
};
}

Trajectory run_episode(const PatientParams& params, BasalController& controller,
                       const BolusFn& bolus, const MealSchedule& schedule,
                       const FaultInjector& faults, const EpisodeConfig& config) {
  if (config.days < 1) throw Error(ErrorCode::kInvalidArgument, "episode needs at least one day");
  params.validate();
  schedule.validate();

  std::mt19937_64 start_rng(derive_seed(config.seed, kStart));
  std::mt19937_64 meal_rng(derive_seed(config.seed, kMeals));
  std::mt19937_64 fault_rng(derive_seed(config.seed, kFaults));
  std::uniform_real_distribution<double> jitter(-config.start_glucose_jitter,
                                                config.start_glucose_jitter);

  const double start_clock = 0.0;
  SimState state = basal_state(params, params.fasting_glucose_mgdl + jitter(start_rng), start_clock);
  CgmSensor sensor(config.cgm_noise_std, config.cgm_noise_correlation,
                   derive_seed(config.seed, kSensor));
  const auto fault_events = realize_faults(faults, start_clock, config.days, fault_rng);
  controller.reset(derive_seed(config.seed, kController));

  std::vector<MealEvent> meals;
  for (int d = 0; d < config.days; ++d) {
    auto day = schedule.realize_day(start_clock + d * kMinutesPerDay, meal_rng);
    meals.insert(meals.end(), day.begin(), day.end());
  }
  std::mt19937_64 sens_rng(derive_seed(config.seed, kSensitivity));
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> daily_sensitivity(static_cast<std::size_t>(config.days));
  for (double& s : daily_sensitivity) s = std::exp(config.daily_sensitivity_std * unit(sens_rng));

  std::size_t n = static_cast<std::size_t>(config.days) * kStepsPerDay;
  if (config.max_samples) n = std::min(n, *config.max_samples);

  Trajectory traj;
  traj.patient_id = config.patient_id.empty() ? to_string(params.id) : config.patient_id;
  traj.episode_id = config.episode_id;
  traj.seed = config.seed;
  traj.start_clock = start_clock;
  traj.reserve(n);

  std::size_t next_meal = 0;
  std::size_t next_fault = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double clock = start_clock + static_cast<double>(i) * kStepMinutes;
    double carbs = 0.0;
    while (next_meal < meals.size() && meals[next_meal].clock_min < clock + kStepMinutes) {
      carbs += meals[next_meal].carbs_g;
      ++next_meal;
    }
    while (next_fault < fault_events.size() &&
           fault_events[next_fault].start_clock < clock + kStepMinutes) {
      traj.fault_onsets.push_back(i);
      ++next_fault;
    }
    traj.t.push_back(clock);
    traj.glucose.push_back(sensor.read(state, fault_events));
    traj.true_glucose.push_back(state.plasma_glucose_mgdl);
    traj.carbs.push_back(carbs);
    traj.bolus.push_back(0.0);
    traj.basal.push_back(0.0);
    if (carbs > 0.0 && bolus) traj.bolus[i] = std::max(0.0, bolus(traj, i));
    traj.basal[i] = std::max(0.0, controller.basal(traj, i));

    const auto day = std::min(daily_sensitivity.size() - 1, i / kStepsPerDay);
    state = step(state, params, traj.basal[i], traj.bolus[i], carbs, kStepMinutes,
                 daily_sensitivity[day]);
    if (!in_survivable_range(state.plasma_glucose_mgdl)) {
      traj.terminated = true;
      break;
    }
  }
  return traj;
}

}  // namespace paint
