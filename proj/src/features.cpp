#include "paint/features.hpp"

#include <algorithm>
#include <cmath>

#include "paint/error.hpp"

namespace paint {

ActivityCurve::ActivityCurve(double peak_min, double duration_min)
    : peak_(peak_min), duration_(duration_min) {
  if (!(peak_min > 0.0) || !(2.0 * peak_min < duration_min)) {
    throw Error(ErrorCode::kInvalidArgument, "activity curve needs 0 < 2 t_p < t_d");
  }
  tau_ = peak_ * (1.0 - peak_ / duration_) / (1.0 - 2.0 * peak_ / duration_);
  a_ = 2.0 * tau_ / duration_;
  scale_ = 1.0 / (1.0 - a_ + (1.0 + a_) * std::exp(-duration_ / tau_));
}

double ActivityCurve::activity(double t) const {
  if (t <= 0.0 || t >= duration_) return 0.0;
  return scale_ / (tau_ * tau_) * t * (1.0 - t / duration_) * std::exp(-t / tau_);
}

double ActivityCurve::remaining(double t) const {
  if (t <= 0.0) return 1.0;
  if (t >= duration_) return 0.0;
  const double e = std::exp(-t / tau_);
  const double r =
      1.0 - scale_ * (1.0 - a_) *
                ((t * t / (tau_ * duration_ * (1.0 - a_)) - t / tau_ - 1.0) * e + 1.0);
  return std::clamp(r, 0.0, 1.0);
}

ActivityCurve insulin_activity_curve() { return ActivityCurve(55.0, 240.0); }
ActivityCurve carb_activity_curve() { return ActivityCurve(40.0, 210.0); }

double on_board(std::span<const double> doses, const ActivityCurve& curve) {
  double total = 0.0;
  const std::size_t n = doses.size();
  for (std::size_t k = 0; k < n; ++k) {
    const double age = static_cast<double>(n - 1 - k) * kStepMinutes;
    if (age >= curve.duration()) continue;
    total += doses[k] * curve.remaining(age);
  }
  return total;
}

namespace {

constexpr std::size_t kHistorySamples = kHistoryWindows * kWindowSamples;  // 240 min

struct Curves {
  ActivityCurve insulin = insulin_activity_curve();
  ActivityCurve carbs = carb_activity_curve();
  std::vector<double> insulin_remaining;
  std::vector<double> carb_remaining;

  Curves() {
    for (std::size_t k = 0; k * kStepMinutes < insulin.duration(); ++k) {
      insulin_remaining.push_back(insulin.remaining(static_cast<double>(k) * kStepMinutes));
    }
    for (std::size_t k = 0; k * kStepMinutes < carbs.duration(); ++k) {
      carb_remaining.push_back(carbs.remaining(static_cast<double>(k) * kStepMinutes));
    }
  }
};

const Curves& curves() {
  static const Curves c;
  return c;
}

double insulin_rate(const Trajectory& traj, std::size_t k) {
  return traj.basal[k] + traj.bolus[k] / kStepMinutes;
}

StateVector featurize(const Trajectory& traj, std::size_t index, const PatientParams& params,
                      double mean_basal) {
  const auto& c = curves();
  const auto i = static_cast<std::ptrdiff_t>(index);
  StateVector s{};
  s[feature::kGlucose] = traj.glucose[index];

  for (std::size_t w = 0; w < kHistoryWindows; ++w) {
    double gsum = 0.0, isum = 0.0;
    for (std::size_t j = 0; j < kWindowSamples; ++j) {
      const std::ptrdiff_t gk = i - static_cast<std::ptrdiff_t>(w * kWindowSamples + j);
      gsum += traj.glucose[static_cast<std::size_t>(std::max<std::ptrdiff_t>(gk, 0))];
      const std::ptrdiff_t ik = gk - 1;
      if (ik >= 0) isum += insulin_rate(traj, static_cast<std::size_t>(ik));
    }
    s[feature::kGlucoseMeans + w] = gsum / kWindowSamples;
    s[feature::kInsulinMeans + w] = isum / kWindowSamples;
  }

  // Doses before the current sample are basal plus bolus; the current sample
  // contributes only its bolus, since its basal is what is being decided.
  double iob = traj.bolus[index];
  for (std::size_t age = 1; age < c.insulin_remaining.size() && age <= index; ++age) {
    iob += insulin_delivered(traj, index - age) * c.insulin_remaining[age];
  }
  double cob = 0.0;
  for (std::size_t age = 0; age < c.carb_remaining.size() && age <= index; ++age) {
    cob += traj.carbs[index - age] * c.carb_remaining[age];
  }
  s[feature::kIob] = iob;
  s[feature::kCob] = cob;
  s[feature::kWeight] = params.weight_kg;
  s[feature::kMeanBasal] = mean_basal;
  return s;
}

}  // namespace

StateVector build_state(const Trajectory& traj, std::size_t index, const PatientParams& params) {
  if (index >= traj.size()) throw Error(ErrorCode::kInvalidArgument, "state index out of range");
  double sum = 0.0;
  for (std::size_t k = 0; k < index; ++k) sum += traj.basal[k];
  return featurize(traj, index, params, index > 0 ? sum / static_cast<double>(index) : 0.0);
}

StateVector build_state(const Trajectory& traj, std::size_t index, const PatientParams& params,
                        double mean_basal) {
  if (index >= traj.size()) throw Error(ErrorCode::kInvalidArgument, "state index out of range");
  return featurize(traj, index, params, mean_basal);
}

std::vector<StateVector> build_states(const Trajectory& traj, const PatientParams& params) {
  std::vector<StateVector> out;
  out.reserve(traj.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    out.push_back(featurize(traj, i, params, i > 0 ? sum / static_cast<double>(i) : 0.0));
    sum += traj.basal[i];
  }
  return out;
}

Normalizer Normalizer::fit(std::span<const StateVector> states) {
  if (states.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot fit normalizer on no data");
  Normalizer n;
  const double count = static_cast<double>(states.size());
  for (const auto& s : states) {
    for (std::size_t f = 0; f < kStateDim; ++f) n.mean[f] += s[f];
  }
  for (double& m : n.mean) m /= count;
  StateVector var{};
  for (const auto& s : states) {
    for (std::size_t f = 0; f < kStateDim; ++f) var[f] += (s[f] - n.mean[f]) * (s[f] - n.mean[f]);
  }
  for (std::size_t f = 0; f < kStateDim; ++f) {
    const double sd = std::sqrt(var[f] / count);
    // Constant features (e.g. weight within one patient) are only centred.
    n.scale[f] = sd > 1e-12 * std::max(1.0, std::abs(n.mean[f])) ? sd : 1.0;
  }
  return n;
}

Normalizer Normalizer::identity() {
  Normalizer n;
  n.scale.fill(1.0);
  return n;
}

StateVector Normalizer::normalize(const StateVector& s) const {
  StateVector z;
  for (std::size_t f = 0; f < kStateDim; ++f) z[f] = (s[f] - mean[f]) / scale[f];
  return z;
}

StateVector Normalizer::denormalize(const StateVector& z) const {
  StateVector s;
  for (std::size_t f = 0; f < kStateDim; ++f) s[f] = z[f] * scale[f] + mean[f];
  return s;
}

}  // namespace paint
