// Offline calibration report for the virtual patients in config/patients.ini.
//
// Prints the behavioural checks the parameter sets are tuned against (meal
// peak, basal drift, zero-insulin escape, bolus response) and runs the coarse
// PID gain grid search whose winners are copied into the config file.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "paint/controllers.hpp"
#include "paint/metrics.hpp"
#include "paint/patient_config.hpp"
#include "paint/patient_sim.hpp"

using namespace paint;

namespace {

struct MealResponse {
  double peak_min = 0.0;
  double rise = 0.0;
};

MealResponse meal_response(const PatientParams& p, double carbs) {
  SimState s = basal_state(p, p.fasting_glucose_mgdl);
  MealResponse r;
  for (int i = 0; i < 160; ++i) {
    s = step(s, p, p.basal_equilibrium_u_per_min, 0.0, i == 0 ? carbs : 0.0);
    const double rise = s.plasma_glucose_mgdl - p.fasting_glucose_mgdl;
    if (rise > r.rise) {
      r.rise = rise;
      r.peak_min = (i + 1) * kStepMinutes;
    }
  }
  return r;
}

double bolus_nadir_drop(const PatientParams& p, double units) {
  SimState s = basal_state(p, p.fasting_glucose_mgdl);
  double nadir = s.plasma_glucose_mgdl;
  for (int i = 0; i < 200; ++i) {
    s = step(s, p, p.basal_equilibrium_u_per_min, i == 0 ? units : 0.0, 0.0);
    nadir = std::min(nadir, s.plasma_glucose_mgdl);
  }
  return p.fasting_glucose_mgdl - nadir;
}

// Bolus that balances glucose AUC over 8 h for a meal, by bisection.
double balancing_bolus(const PatientParams& p, double carbs) {
  auto auc = [&](double units) {
    SimState s = basal_state(p, p.fasting_glucose_mgdl);
    double area = 0.0;
    for (int i = 0; i < 160; ++i) {
      s = step(s, p, p.basal_equilibrium_u_per_min, i == 0 ? units : 0.0, i == 0 ? carbs : 0.0);
      area += s.plasma_glucose_mgdl - p.fasting_glucose_mgdl;
    }
    return area;
  };
  double lo = 0.0, hi = 50.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (auc(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double zero_insulin_escape_hours(const PatientParams& p) {
  SimState s = basal_state(p, p.fasting_glucose_mgdl);
  for (int i = 0; i < 20 * 480; ++i) {
    s = step(s, p, 0.0, 0.0, 0.0);
    if (!in_survivable_range(s.plasma_glucose_mgdl)) return (i + 1) * kStepMinutes / 60.0;
  }
  return INFINITY;
}

double drift_48h(const PatientParams& p) {
  SimState s = basal_state(p, p.fasting_glucose_mgdl);
  double worst = 0.0;
  for (int i = 0; i < 960; ++i) {
    s = step(s, p, p.basal_equilibrium_u_per_min, 0.0, 0.0);
    worst = std::max(worst, std::abs(s.plasma_glucose_mgdl - p.fasting_glucose_mgdl));
  }
  return worst;
}

EpisodeReport run_pid(const PatientProfile& prof, const PidConfig& pid, std::uint64_t seed,
                      bool noisy) {
  PidController controller(pid, noisy);
  EpisodeConfig cfg;
  cfg.days = 10;
  cfg.seed = seed;
  const auto traj = run_episode(prof.params, controller,
                                make_bolus_fn(bolus_config_for(prof.params), seed + 7),
                                prof.meals, FaultInjector{}, cfg);
  return score(traj);
}

}  // namespace

int main(int argc, char** argv) {
  const bool search = argc > 1 && std::string(argv[1]) == "--search";
  for (const char* id : {"adult", "adolescent", "child"}) {
    const PatientProfile prof = load_patient(id);
    const PatientParams& p = prof.params;
    const auto meal = meal_response(p, 50.0);
    std::printf("[%s] EGP %.3f  Ieq %.2f  50g peak +%.1f at %.0f min  drift48h %.3f  "
                "zero-insulin escape %.1f h\n",
                id, p.endogenous_production(), p.steady_plasma_insulin(p.basal_equilibrium_u_per_min),
                meal.rise, meal.peak_min, drift_48h(p), zero_insulin_escape_hours(p));
    const double cf = bolus_nadir_drop(p, 1.0);
    const double cr = 50.0 / balancing_bolus(p, 50.0);
    std::printf("  measured CF %.1f mg/dL/U  balancing CR %.2f g/U  (config CF %.1f CR %.2f)\n", cf,
                cr, p.correction_factor, p.carb_ratio);

    PidConfig base = prof.pid;
    const auto rep = run_pid(prof, base, 11, false);
    const auto noisy = run_pid(prof, base, 11, true);
    std::printf("  PID config: risk/step %.2f TIR %.1f TBR %.1f CoV %.1f mean %.1f  "
                "(noisy: risk/step %.2f TIR %.1f TBR %.1f)\n",
                rep.magni_risk_total / rep.samples, rep.tir_pct, rep.tbr_pct, rep.cov_pct,
                rep.mean_glucose, noisy.magni_risk_total / noisy.samples, noisy.tir_pct,
                noisy.tbr_pct);
    if (!search) continue;

    double best = INFINITY;
    PidConfig winner = base;
    const double ueq = p.basal_equilibrium_u_per_min;
    for (double kp : {0.1, 0.25, 0.5, 1.0, 2.0}) {
      for (double ki : {0.005, 0.01, 0.02, 0.05}) {
        for (double kd : {5.0, 10.0, 20.0, 40.0}) {
          PidConfig c = base;
          // Gains expressed in basal-equilibrium units per 100 mg/dL.
          c.k_p = kp * ueq / 100.0;
          c.k_i = ki * ueq / 100.0;
          c.k_d = kd * ueq / 100.0;
          c.initial_integral = ueq / c.k_i;
          c.integral_clamp = 4.0 * c.initial_integral;
          double risk = 0.0;
          for (std::uint64_t seed : {1, 2}) {
            const auto r = run_pid(prof, c, seed, false);
            risk += r.terminated ? INFINITY : r.magni_risk_total / r.samples;
          }
          if (risk < best) {
            best = risk;
            winner = c;
          }
        }
      }
    }
    const auto wr = run_pid(prof, winner, 11, false);
    const auto wn = run_pid(prof, winner, 11, true);
    std::printf("  best noisy: risk/step %.2f TIR %.1f TBR %.1f CoV %.1f mean %.1f\n",
                wn.magni_risk_total / wn.samples, wn.tir_pct, wn.tbr_pct, wn.cov_pct, wn.mean_glucose);
    std::printf("  best: pid.k_p = %.6g  pid.k_i = %.6g  pid.k_d = %.6g  pid.integral_clamp = %.6g\n"
                "        risk/step %.2f TIR %.1f TBR %.1f CoV %.1f mean %.1f\n",
                winner.k_p, winner.k_i, winner.k_d, winner.integral_clamp,
                wr.magni_risk_total / wr.samples, wr.tir_pct, wr.tbr_pct, wr.cov_pct,
                wr.mean_glucose);
  }
  return 0;
}
