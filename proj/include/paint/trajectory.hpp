#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace paint {

inline constexpr double kStepMinutes = 3.0;
inline constexpr std::size_t kStepsPerDay = 480;
inline constexpr double kMinutesPerDay = 1440.0;

/// One simulated episode at 3-minute resolution.
///
/// `glucose` is what the sensor reported (and what controllers, features and
/// preference functions see); `true_glucose` is the plasma value used for
/// outcome metrics and termination. `basal` is in U/min, `bolus` in U and
/// `carbs` in grams, all indexed by sample.
struct Trajectory {
  std::string patient_id;
  std::int64_t episode_id = 0;
  std::uint64_t seed = 0;
  double start_clock = 0.0;

  std::vector<double> t;
  std::vector<double> glucose;
  std::vector<double> true_glucose;
  std::vector<double> basal;
  std::vector<double> bolus;
  std::vector<double> carbs;

  /// Sample indices where an injected sensor fault began.
  std::vector<std::size_t> fault_onsets;
  bool terminated = false;

  std::size_t size() const noexcept { return t.size(); }
  bool empty() const noexcept { return t.empty(); }

  double clock_at(std::size_t i) const { return t[i]; }
  double time_of_day(std::size_t i) const;

  void reserve(std::size_t n);
  /// Throws if the parallel arrays disagree or time is not a 3-minute grid.
  void validate() const;
};

/// Insulin delivered during sample `i` in units (basal over the step plus bolus).
inline double insulin_delivered(const Trajectory& traj, std::size_t i) {
  return traj.basal[i] * kStepMinutes + traj.bolus[i];
}

bool operator==(const Trajectory& a, const Trajectory& b);

}  // namespace paint
