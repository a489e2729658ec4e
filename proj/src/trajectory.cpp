#include "paint/trajectory.hpp"

#include <cmath>

#include "paint/error.hpp"

namespace paint {

double Trajectory::time_of_day(std::size_t i) const {
  const double tod = std::fmod(t[i], kMinutesPerDay);
  return tod < 0.0 ? tod + kMinutesPerDay : tod;
}

void Trajectory::reserve(std::size_t n) {
  t.reserve(n);
  glucose.reserve(n);
  true_glucose.reserve(n);
  basal.reserve(n);
  bolus.reserve(n);
  carbs.reserve(n);
}

void Trajectory::validate() const {
  const std::size_t n = t.size();
  if (glucose.size() != n || true_glucose.size() != n || basal.size() != n ||
      bolus.size() != n || carbs.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "trajectory arrays have unequal length");
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (std::abs(t[i] - t[i - 1] - kStepMinutes) > 1e-9) {
      throw Error(ErrorCode::kInvalidArgument, "trajectory time must advance by 3 minutes");
    }
  }
  for (std::size_t onset : fault_onsets) {
    if (onset >= n) throw Error(ErrorCode::kInvalidArgument, "fault onset out of range");
  }
}

bool operator==(const Trajectory& a, const Trajectory& b) {
  return a.patient_id == b.patient_id && a.episode_id == b.episode_id && a.seed == b.seed &&
         a.start_clock == b.start_clock && a.t == b.t && a.glucose == b.glucose &&
         a.true_glucose == b.true_glucose && a.basal == b.basal && a.bolus == b.bolus &&
         a.carbs == b.carbs && a.fault_onsets == b.fault_onsets && a.terminated == b.terminated;
}

}  // namespace paint
