#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "paint/patient_sim.hpp"
#include "paint/trajectory.hpp"

namespace paint {

inline constexpr std::size_t kStateDim = 21;
inline constexpr std::size_t kHistoryWindows = 8;
inline constexpr std::size_t kWindowSamples = 10;  // 30 minutes

using StateVector = std::array<double, kStateDim>;

/// Feature layout of StateVector.
namespace feature {
inline constexpr std::size_t kGlucose = 0;
inline constexpr std::size_t kGlucoseMeans = 1;   // 8 entries, most recent first
inline constexpr std::size_t kInsulinMeans = 9;   // 8 entries, most recent first
inline constexpr std::size_t kIob = 17;
inline constexpr std::size_t kCob = 18;
inline constexpr std::size_t kWeight = 19;
inline constexpr std::size_t kMeanBasal = 20;
}  // namespace feature

/// Loop-style exponential activity curve with peak `t_p` and duration `t_d`.
class ActivityCurve {
 public:
  ActivityCurve(double peak_min, double duration_min);

  double peak() const noexcept { return peak_; }
  double duration() const noexcept { return duration_; }
  double tau() const noexcept { return tau_; }

  /// Activity rate at age `t_min`; zero outside [0, t_d].
  double activity(double t_min) const;
  /// Fraction of a dose still to act at age `t_min`: 1 at 0, 0 from t_d on.
  double remaining(double t_min) const;

 private:
  double peak_;
  double duration_;
  double tau_;
  double a_;
  double scale_;
};

ActivityCurve insulin_activity_curve();  // t_p 55, t_d 240
ActivityCurve carb_activity_curve();     // t_p 40, t_d 210

/// Amount on board from a per-sample dose history (oldest first; the last
/// entry is the current sample at age 0).
double on_board(std::span<const double> doses, const ActivityCurve& curve);

/// Featurizes sample `index`. Glucose windows end at the current reading;
/// insulin windows cover the actions before it. Missing history is padded
/// with the first glucose reading and zero insulin/carbs.
StateVector build_state(const Trajectory& traj, std::size_t index, const PatientParams& params);
/// Same, with the running mean basal supplied by the caller.
StateVector build_state(const Trajectory& traj, std::size_t index, const PatientParams& params,
                        double mean_basal);

/// All samples of a trajectory at once (same result as build_state per index).
std::vector<StateVector> build_states(const Trajectory& traj, const PatientParams& params);

/// Per-feature z-score statistics frozen from a training set.
struct Normalizer {
  StateVector mean{};
  StateVector scale{};

  static Normalizer fit(std::span<const StateVector> states);
  static Normalizer identity();

  StateVector normalize(const StateVector& s) const;
  StateVector denormalize(const StateVector& z) const;
};

}  // namespace paint
