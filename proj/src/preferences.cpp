#include "paint/preferences.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "paint/error.hpp"
#include "paint/metrics.hpp"

namespace paint {

namespace {

struct NamedKind {
  const char* name;
  PreferenceKind kind;
};

constexpr NamedKind kNames[] = {
    {"tir1", PreferenceKind::kTir1},         {"tir2", PreferenceKind::kTir2},
    {"tir3", PreferenceKind::kTir3},         {"tbr1", PreferenceKind::kTbr1},
    {"tbr2", PreferenceKind::kTbr2},         {"tbr3", PreferenceKind::kTbr3},
    {"cov1", PreferenceKind::kCov1},         {"cov2", PreferenceKind::kCov2},
    {"cov3", PreferenceKind::kCov3},         {"mealtime", PreferenceKind::kMealtime},
    {"compression", PreferenceKind::kCompression},
};

constexpr double kBreakfastEnd = 600.0;
constexpr double kLunchEnd = 960.0;

std::size_t meal_slot(double time_of_day) {
  if (time_of_day < kBreakfastEnd) return 0;
  if (time_of_day < kLunchEnd) return 1;
  return 2;
}

}  // namespace

std::string PreferenceFn::name() const {
  if (kind == PreferenceKind::kTarget) {
    return "target-" + std::to_string(static_cast<long long>(std::lround(target_mgdl)));
  }
  for (const auto& n : kNames) {
    if (n.kind == kind) return n.name;
  }
  return "unknown";
}

PreferenceFn PreferenceFn::from_name(const std::string& name) {
  for (const auto& n : kNames) {
    if (name == n.name) return {n.kind, 140.0};
  }
  const std::string prefix = "target-";
  if (name.rfind(prefix, 0) == 0) {
    const std::string value = name.substr(prefix.size());
    std::size_t used = 0;
    double target = 0.0;
    try {
      target = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == value.size() && used > 0 && target > 0.0 && target < 1000.0) {
      return {PreferenceKind::kTarget, target};
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown preference function '" + name + "'");
}

double evaluate(const PreferenceFn& fn, const PreferenceInput& in) {
  const double g = in.glucose;
  const double a = in.action;
  switch (fn.kind) {
    case PreferenceKind::kTir1: {
      const double d = g - 125.0;
      return -(d * d) * (d * d);
    }
    case PreferenceKind::kTir2:
      return (g > 70.0 && g < 180.0) ? 1.0 : 0.0;
    case PreferenceKind::kTir3:
      return a;
    case PreferenceKind::kTbr1: {
      const double r = magni_risk(g);
      return -r * r;
    }
    case PreferenceKind::kTbr2:
      return g > 70.0 ? 1.0 : 0.0;
    case PreferenceKind::kTbr3:
      return -a;
    case PreferenceKind::kCov1:
      return -std::abs(g - 144.0);
    case PreferenceKind::kCov2: {
      if (g > 70.0) {
        const double d = g - in.mean_glucose;
        return -d * d;
      }
      return -in.hypo_penalty;
    }
    case PreferenceKind::kCov3:
      return -std::abs(in.delta_glucose);
    case PreferenceKind::kMealtime:
      return in.pre_meal ? a * a : 0.0;
    case PreferenceKind::kCompression:
      return std::abs(g - in.lag5_glucose) > kCompressionThreshold ? a * a : 0.0;
    case PreferenceKind::kTarget:
      return -std::abs(g - fn.target_mgdl);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown preference kind");
}

std::vector<double> mean_mealtimes(const OfflineDataset& data, std::span<const std::size_t> samples) {
  std::array<double, 3> sum{};
  std::array<std::size_t, 3> count{};
  for (std::size_t flat : samples) {
    const std::size_t e = data.episode_of(flat);
    const std::size_t t = flat - data.offsets[e];
    const auto& traj = data.episodes[e];
    if (traj.carbs[t] <= 0.0) continue;
    const double tod = traj.time_of_day(t);
    const std::size_t slot = meal_slot(tod);
    sum[slot] += tod;
    ++count[slot];
  }
  std::vector<double> out(3, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t s = 0; s < 3; ++s) {
    if (count[s] > 0) out[s] = sum[s] / static_cast<double>(count[s]);
  }
  return out;
}

bool in_pre_meal_window(double time_of_day, std::span<const double> mealtimes) {
  for (double m : mealtimes) {
    if (std::isnan(m)) continue;
    double lead = m - time_of_day;
    if (lead < 0.0) lead += kMinutesPerDay;
    if (lead > 0.0 && lead <= kPreMealWindowMin) return true;
  }
  return false;
}

std::vector<double> raw_preferences(const PreferenceFn& fn, const OfflineDataset& data,
                                    std::span<const std::size_t> samples) {
  if (samples.empty()) return {};
  double mean_g = 0.0;
  for (std::size_t flat : samples) {
    const std::size_t e = data.episode_of(flat);
    mean_g += data.episodes[e].glucose[flat - data.offsets[e]];
  }
  mean_g /= static_cast<double>(samples.size());

  double hypo_penalty = 0.0;
  for (std::size_t flat : samples) {
    const std::size_t e = data.episode_of(flat);
    const double d = data.episodes[e].glucose[flat - data.offsets[e]] - mean_g;
    hypo_penalty = std::max(hypo_penalty, d * d);
  }

  std::vector<double> mealtimes;
  if (fn.kind == PreferenceKind::kMealtime) mealtimes = mean_mealtimes(data, samples);

  std::vector<double> out;
  out.reserve(samples.size());
  for (std::size_t flat : samples) {
    const std::size_t e = data.episode_of(flat);
    const std::size_t t = flat - data.offsets[e];
    const auto& traj = data.episodes[e];
    PreferenceInput in;
    in.glucose = traj.glucose[t];
    in.action = traj.basal[t];
    in.delta_glucose = traj.glucose[t] - traj.glucose[t >= kDeltaLagSamples ? t - kDeltaLagSamples : 0];
    in.lag5_glucose = traj.glucose[t >= kCompressionLagSamples ? t - kCompressionLagSamples : 0];
    in.mean_glucose = mean_g;
    in.hypo_penalty = hypo_penalty;
    if (!mealtimes.empty()) in.pre_meal = in_pre_meal_window(traj.time_of_day(t), mealtimes);
    out.push_back(evaluate(fn, in));
  }
  return out;
}

std::vector<double> normalize_labels(std::span<const double> raw) {
  std::vector<double> out(raw.begin(), raw.end());
  if (raw.empty()) return out;
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double span = *hi - *lo;
  for (double& v : out) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "non-finite preference value");
    v = span > 0.0 ? 2.0 * (v - *lo) / span - 1.0 : std::clamp(v, -1.0, 1.0);
  }
  return out;
}

std::vector<std::size_t> select_label_samples(const OfflineDataset& data, std::size_t count,
                                              std::uint64_t seed, std::size_t segment_length) {
  if (segment_length == 0) throw Error(ErrorCode::kInvalidArgument, "segment length must be positive");
  if (count > data.size()) {
    throw Error(ErrorCode::kInvalidArgument, "requested " + std::to_string(count) +
                                                 " labels from a dataset of " +
                                                 std::to_string(data.size()) + " samples");
  }
  struct Segment {
    std::size_t begin;
    std::size_t length;
  };
  std::vector<Segment> segments;
  for (std::size_t e = 0; e < data.episodes.size(); ++e) {
    const std::size_t len = data.episodes[e].size();
    for (std::size_t s = 0; s < len; s += segment_length) {
      segments.push_back({data.offsets[e] + s, std::min(segment_length, len - s)});
    }
  }
  std::mt19937_64 rng(seed);
  std::shuffle(segments.begin(), segments.end(), rng);
  std::vector<std::size_t> out;
  out.reserve(count);
  for (const auto& seg : segments) {
    for (std::size_t k = 0; k < seg.length && out.size() < count; ++k) out.push_back(seg.begin + k);
    if (out.size() == count) break;
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace paint
