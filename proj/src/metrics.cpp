#include "paint/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "paint/error.hpp"

namespace paint {

double magni_risk(double glucose_mgdl) {
  if (!(glucose_mgdl > 0.0)) throw Error(ErrorCode::kInvalidArgument, "glucose must be positive");
  constexpr double c1 = 3.5506, c2 = 0.8353, c3 = 3.7932;
  const double inner = c1 * (std::pow(std::log(glucose_mgdl), c2) - c3);
  return 10.0 * inner * inner;
}

namespace {

double pct(std::span<const double> g, auto&& pred) {
  if (g.empty()) return 0.0;
  const auto n = std::count_if(g.begin(), g.end(), pred);
  return 100.0 * static_cast<double>(n) / static_cast<double>(g.size());
}

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

double time_in_range_pct(std::span<const double> g) {
  return pct(g, [](double x) { return x >= kTirLow && x <= kTirHigh; });
}

double time_below_range_pct(std::span<const double> g) {
  return pct(g, [](double x) { return x < kTirLow; });
}

double time_above_range_pct(std::span<const double> g) {
  return pct(g, [](double x) { return x > kTirHigh; });
}

double coefficient_of_variation_pct(std::span<const double> g) {
  if (g.empty()) return 0.0;
  const double m = mean_of(g);
  double ss = 0.0;
  for (double x : g) ss += (x - m) * (x - m);
  return 100.0 * std::sqrt(ss / static_cast<double>(g.size())) / m;
}

double median(std::vector<double> values) {
  values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return std::isnan(v); }),
               values.end());
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

EpisodeReport score(const Trajectory& traj, const ScoreWindows& windows) {
  if (traj.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot score an empty trajectory");
  const std::span<const double> g(traj.true_glucose);
  EpisodeReport r;
  r.samples = g.size();
  r.mean_glucose = mean_of(g);
  r.median_glucose = median({g.begin(), g.end()});
  for (double x : g) r.magni_risk_total += magni_risk(x);
  r.magni_reward = -r.magni_risk_total;
  r.tir_pct = time_in_range_pct(g);
  r.tbr_pct = time_below_range_pct(g);
  r.tar_pct = 100.0 - r.tir_pct - r.tbr_pct;
  r.cov_pct = coefficient_of_variation_pct(g);
  r.mean_basal = mean_of(traj.basal);
  r.terminated = traj.terminated;

  auto window = [&](std::size_t from, double minutes) {
    const std::size_t len = static_cast<std::size_t>(std::lround(minutes / kStepMinutes));
    const std::size_t to = std::min(g.size(), from + len);
    return std::pair{from, to};
  };

  std::vector<double> meal_tir;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    if (traj.carbs[i] <= 0.0) continue;
    const auto [from, to] = window(i, windows.post_meal_min);
    meal_tir.push_back(time_in_range_pct(g.subspan(from, to - from)));
  }
  r.meal_events = meal_tir.size();
  r.post_meal_tir_pct = median(meal_tir);

  std::vector<double> event_cov, event_basal;
  for (std::size_t onset : traj.fault_onsets) {
    const auto [from, to] = window(onset, windows.post_event_min);
    event_cov.push_back(coefficient_of_variation_pct(g.subspan(from, to - from)));
    const auto [bf, bt] = window(onset, windows.post_event_basal_min);
    event_basal.push_back(mean_of(std::span<const double>(traj.basal).subspan(bf, bt - bf)));
  }
  r.fault_events = event_cov.size();
  r.post_event_cov_pct = median(event_cov);
  r.post_event_basal = median(event_basal);
  return r;
}

std::string to_json_line(const EpisodeReport& r) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isnan(v)) return nullptr;
    return v;
  };
  nlohmann::json j{{"samples", r.samples},
                   {"mean_glucose", r.mean_glucose},
                   {"median_glucose", r.median_glucose},
                   {"magni_risk_total", r.magni_risk_total},
                   {"magni_reward", r.magni_reward},
                   {"tir_pct", r.tir_pct},
                   {"tbr_pct", r.tbr_pct},
                   {"tar_pct", r.tar_pct},
                   {"cov_pct", r.cov_pct},
                   {"mean_basal", r.mean_basal},
                   {"terminated", r.terminated},
                   {"post_meal_tir_pct", num(r.post_meal_tir_pct)},
                   {"post_event_cov_pct", num(r.post_event_cov_pct)},
                   {"post_event_basal", num(r.post_event_basal)},
                   {"meal_events", r.meal_events},
                   {"fault_events", r.fault_events}};
  return j.dump();
}

}  // namespace paint
