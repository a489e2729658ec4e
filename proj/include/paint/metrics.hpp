#pragma once

#include <span>
#include <string>
#include <vector>

#include "paint/trajectory.hpp"

namespace paint {

inline constexpr double kTirLow = 70.0;
inline constexpr double kTirHigh = 180.0;

/// Magni risk of a glucose value (mg/dL). Zero near 140, grows on both sides,
/// steeper for hypoglycaemia. Throws for g <= 0.
double magni_risk(double glucose_mgdl);

struct ScoreWindows {
  /// Post-meal window length for TIR, minutes.
  double post_meal_min = 240.0;
  /// Post-fault window for CoV, minutes.
  double post_event_min = 480.0;
  /// Post-fault window for mean basal, minutes.
  double post_event_basal_min = 60.0;
};

struct EpisodeReport {
  std::size_t samples = 0;
  double mean_glucose = 0.0;
  double median_glucose = 0.0;
  /// Sum of Magni risk over all samples (>= 0, lower is better).
  double magni_risk_total = 0.0;
  /// Negated total, the reward convention used in result tables.
  double magni_reward = 0.0;
  double tir_pct = 0.0;
  double tbr_pct = 0.0;
  double tar_pct = 0.0;
  double cov_pct = 0.0;
  double mean_basal = 0.0;
  bool terminated = false;
  /// Median over meals of TIR in the post-meal window; NaN with no meals.
  double post_meal_tir_pct = 0.0;
  /// Median over faults of CoV in the post-event window; NaN with no faults.
  double post_event_cov_pct = 0.0;
  /// Median over faults of mean basal in the hour after onset; NaN with no faults.
  double post_event_basal = 0.0;
  std::size_t meal_events = 0;
  std::size_t fault_events = 0;
};

double time_in_range_pct(std::span<const double> glucose);
double time_below_range_pct(std::span<const double> glucose);
double time_above_range_pct(std::span<const double> glucose);
/// 100 * population std / mean.
double coefficient_of_variation_pct(std::span<const double> glucose);
double median(std::vector<double> values);

/// Scores outcome metrics on the plasma glucose series.
EpisodeReport score(const Trajectory& traj, const ScoreWindows& windows = {});

/// Line-delimited JSON record for one report.
std::string to_json_line(const EpisodeReport& report);

}  // namespace paint
