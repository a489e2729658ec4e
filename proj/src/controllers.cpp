#include "paint/controllers.hpp"

#include <algorithm>
#include <cmath>

#include "paint/error.hpp"

namespace paint {

void PidConfig::validate() const {
  if (k_p < 0.0 || k_i < 0.0 || k_d < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "PID gains must be non-negative");
  }
  if (g_targ_mgdl < 100.0 || g_targ_mgdl > 200.0) {
    throw Error(ErrorCode::kInvalidArgument, "PID target must lie in [100, 200] mg/dL");
  }
  if (!(max_basal > 0.0) || integral_clamp < 0.0 || param_noise_std < 0.0 ||
      action_ou_theta < 0.0 || action_ou_sigma < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "invalid PID noise or range settings");
  }
}

double pid_law(const PidGains& gains, double g_t, double g_prev, double error_sum, double target) {
  return gains.k_p * (g_t - target) + gains.k_i * error_sum + gains.k_d * (g_t - g_prev);
}

namespace {

PidGains draw_gains(const PidConfig& config, bool noisy, std::mt19937_64& rng) {
  PidGains gains{config.k_p, config.k_i, config.k_d};
  if (noisy && config.param_noise_std > 0.0) {
    std::normal_distribution<double> unit(0.0, 1.0);
    gains.k_p *= std::max(0.0, 1.0 + config.param_noise_std * unit(rng));
    gains.k_i *= std::max(0.0, 1.0 + config.param_noise_std * unit(rng));
    gains.k_d *= std::max(0.0, 1.0 + config.param_noise_std * unit(rng));
  }
  return gains;
}

double ou_increment(double x, const PidConfig& config, std::mt19937_64& rng) {
  if (config.action_ou_sigma <= 0.0) return x - config.action_ou_theta * x;
  std::normal_distribution<double> unit(0.0, 1.0);
  return x - config.action_ou_theta * x + config.action_ou_sigma * config.max_basal * unit(rng);
}

}  // namespace

double pid_action(std::span<const double> glucose, const PidConfig& config, std::mt19937_64& rng) {
  if (glucose.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "PID needs at least two glucose readings");
  }
  const PidGains gains = draw_gains(config, true, rng);
  double sum = config.initial_integral;
  for (double g : glucose) {
    sum = std::clamp(sum + (g - config.g_targ_mgdl), -config.integral_clamp, config.integral_clamp);
  }
  const double g_t = glucose[glucose.size() - 1];
  const double g_prev = glucose[glucose.size() - 2];
  const double raw = pid_law(gains, g_t, g_prev, sum, config.g_targ_mgdl) + ou_increment(0.0, config, rng);
  return std::clamp(raw, 0.0, config.max_basal);
}

PidController::PidController(PidConfig config, bool noisy)
    : config_(config), noisy_(noisy), gains_{config.k_p, config.k_i, config.k_d} {
  config_.validate();
  error_sum_ = config_.initial_integral;
}

void PidController::reset(std::uint64_t seed) {
  rng_.seed(seed);
  gains_ = draw_gains(config_, noisy_, rng_);
  error_sum_ = std::clamp(config_.initial_integral, -config_.integral_clamp, config_.integral_clamp);
  ou_ = 0.0;
}

double PidController::basal(const Trajectory& history, std::size_t index) {
  const double g_t = history.glucose[index];
  const double g_prev = index > 0 ? history.glucose[index - 1] : g_t;
  error_sum_ = std::clamp(error_sum_ + (g_t - config_.g_targ_mgdl), -config_.integral_clamp,
                          config_.integral_clamp);
  double action = pid_law(gains_, g_t, g_prev, error_sum_, config_.g_targ_mgdl);
  if (noisy_) {
    ou_ = ou_increment(ou_, config_, rng_);
    action += ou_;
  }
  return std::clamp(action, 0.0, config_.max_basal);
}

void BolusConfig::validate() const {
  if (!(carb_ratio > 0.0) || !(correction_factor > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "carb ratio and correction factor must be positive");
  }
  if (carb_estimate_error_frac < 0.0 || carb_estimate_error_frac > 0.5) {
    throw Error(ErrorCode::kInvalidArgument, "carb estimate error must lie in [0, 0.5]");
  }
}

double bolus(double carbs_g, double glucose_mgdl, double recent_carbs_g, const BolusConfig& config,
             std::mt19937_64& rng) {
  if (carbs_g < 0.0) throw Error(ErrorCode::kInvalidArgument, "carbs must be non-negative");
  double estimate = carbs_g;
  if (config.carb_estimate_error_frac > 0.0) {
    std::uniform_real_distribution<double> err(-config.carb_estimate_error_frac,
                                               config.carb_estimate_error_frac);
    estimate *= 1.0 + err(rng);
  }
  double dose = estimate / config.carb_ratio;
  if (recent_carbs_g <= 0.0) dose += (glucose_mgdl - config.g_targ_mgdl) / config.correction_factor;
  return std::max(0.0, dose);
}

BolusFn make_bolus_fn(const BolusConfig& config, std::uint64_t seed) {
  config.validate();
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [config, rng](const Trajectory& history, std::size_t index) {
    const std::size_t from = index > config.carb_lookback_steps ? index - config.carb_lookback_steps : 0;
    double recent = 0.0;
    for (std::size_t k = from; k < index; ++k) recent += history.carbs[k];
    return bolus(history.carbs[index], history.glucose[index], recent, config, *rng);
  };
}

BolusConfig bolus_config_for(const PatientParams& params, double target_mgdl) {
  BolusConfig config;
  config.carb_ratio = params.carb_ratio;
  config.correction_factor = params.correction_factor;
  config.g_targ_mgdl = target_mgdl;
  return config;
}

}  // namespace paint
