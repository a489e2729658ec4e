#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "paint/datastore.hpp"

namespace paint {

enum class PreferenceKind {
  kTir1,
  kTir2,
  kTir3,
  kTbr1,
  kTbr2,
  kTbr3,
  kCov1,
  kCov2,
  kCov3,
  kMealtime,
  kCompression,
  kTarget,  // -|g - target|, used for setpoint following
};

struct PreferenceFn {
  PreferenceKind kind = PreferenceKind::kTir2;
  double target_mgdl = 140.0;  // only for kTarget

  /// "tir1".."cov3", "mealtime", "compression", "target-<mg/dL>".
  std::string name() const;
  static PreferenceFn from_name(const std::string& name);
};

/// What a preference function may look at for one sample.
struct PreferenceInput {
  double glucose = 0.0;       // g_t, CGM
  double action = 0.0;        // basal, U/min
  double delta_glucose = 0.0; // g_t - g_{t-10 samples}
  double lag5_glucose = 0.0;  // g_{t-5 samples}
  double mean_glucose = 0.0;  // over the labeled subset
  double hypo_penalty = 0.0;  // CoV2 penalty below 70
  bool pre_meal = false;      // inside a 2 h pre-mealtime window
};

/// Raw, unnormalized preference value.
double evaluate(const PreferenceFn& fn, const PreferenceInput& in);

inline constexpr std::size_t kDeltaLagSamples = 10;
inline constexpr std::size_t kCompressionLagSamples = 5;
inline constexpr double kCompressionThreshold = 15.0;
inline constexpr double kPreMealWindowMin = 120.0;

/// Per-slot mean time of day (minutes) of the meals in a sample subset.
/// Slots: breakfast before 10:00, lunch before 16:00, dinner after. A slot
/// with no meals is NaN.
std::vector<double> mean_mealtimes(const OfflineDataset& data, std::span<const std::size_t> samples);

/// True when `time_of_day` lies in the window before one of the mealtimes.
bool in_pre_meal_window(double time_of_day, std::span<const double> mealtimes);

/// Raw values for a subset of flat indices; subset statistics (mean glucose,
/// hypo penalty, mealtimes) come from the same subset.
std::vector<double> raw_preferences(const PreferenceFn& fn, const OfflineDataset& data,
                                    std::span<const std::size_t> samples);

/// Affine min-max map onto [-1, 1]. A constant input maps to its values
/// clamped into [-1, 1].
std::vector<double> normalize_labels(std::span<const double> raw);

/// Chooses `count` flat indices as contiguous segments of `segment_length`
/// samples (the last one shorter), non-overlapping, in seeded random order.
std::vector<std::size_t> select_label_samples(const OfflineDataset& data, std::size_t count,
                                              std::uint64_t seed,
                                              std::size_t segment_length = 960);

}  // namespace paint
