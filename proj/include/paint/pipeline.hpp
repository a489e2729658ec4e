#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "paint/controllers.hpp"
#include "paint/datastore.hpp"
#include "paint/metrics.hpp"
#include "paint/patient_config.hpp"
#include "paint/safe_orl.hpp"

namespace paint {

/// Compression lows as used for all generated data and evaluations.
FaultInjector default_faults();

struct GenerationConfig {
  std::size_t samples = 20000;
  int episode_days = 10;
  std::uint64_t seed = 0;
  /// PID setpoint override (the demonstrator's bolus target follows it).
  std::optional<double> pid_target_mgdl;
  bool noisy_pid = true;
  FaultInjector faults = default_faults();
};

/// Demonstrator data: consecutive 10-day PID + bolus episodes until
/// `samples` are collected (the last episode truncated).
std::vector<Trajectory> generate_dataset(const PatientProfile& profile, const std::string& patient_id,
                                         const GenerationConfig& config);

/// Largest basal the pump allows for the profile.
double max_basal_for(const PatientProfile& profile);

using ControllerFactory = std::function<std::unique_ptr<BasalController>()>;

struct EvalConfig {
  int days = 10;
  std::size_t repeats = 3;
  std::uint64_t seed = 0;
  double bolus_target_mgdl = 140.0;
  FaultInjector faults = default_faults();
};

/// Seed of evaluation repeat `r`; shared by every controller so comparisons are paired.
std::uint64_t eval_episode_seed(std::uint64_t seed, std::size_t repeat);

std::vector<EpisodeReport> evaluate(const PatientProfile& profile, const std::string& patient_id,
                                    const ControllerFactory& factory, const EvalConfig& config,
                                    std::vector<Trajectory>* episodes = nullptr);

ControllerFactory pid_factory(const PidConfig& pid, bool noisy);
ControllerFactory policy_factory(const Policy& policy, const PatientParams& params);

/// Medians over a set of reports.
struct ReportSummary {
  double magni_risk_total = 0.0;
  double mean_glucose = 0.0;
  double tir_pct = 0.0;
  double tbr_pct = 0.0;
  double cov_pct = 0.0;
  double post_meal_tir_pct = 0.0;
  double post_event_cov_pct = 0.0;
  double post_event_basal = 0.0;
  double mean_basal = 0.0;
  std::size_t terminated = 0;
};

ReportSummary summarize(const std::vector<EpisodeReport>& reports);

}  // namespace paint
