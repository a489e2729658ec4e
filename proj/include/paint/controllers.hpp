#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>

#include "paint/patient_sim.hpp"

namespace paint {

/// PID basal controller settings. Output is an absolute basal rate: the
/// integral term carries the steady basal, so `initial_integral` lets an
/// episode start at the programmed rate instead of zero.
struct PidConfig {
  double k_p = 0.0;
  double k_i = 0.0;
  double k_d = 0.0;
  double g_targ_mgdl = 140.0;
  double param_noise_std = 0.05;  // multiplicative, drawn once per episode
  double action_ou_theta = 0.15;
  double action_ou_sigma = 0.02;  // fraction of max_basal
  double integral_clamp = 0.0;    // bound on the error sum, mg/dL * samples
  double initial_integral = 0.0;
  double max_basal = 0.0;

  void validate() const;
};

struct PidGains {
  double k_p = 0.0;
  double k_i = 0.0;
  double k_d = 0.0;
};

/// Noise-free PID law for the latest reading. `error_sum` must already
/// include the current error and be clamped. Not clamped to the pump range.
double pid_law(const PidGains& gains, double g_t, double g_prev, double error_sum, double target);

/// Stateless evaluation over a glucose history (oldest first, at least two
/// readings), with the per-episode gain draw and one OU increment taken from
/// `rng`. Output clamped to [0, max_basal].
double pid_action(std::span<const double> glucose, const PidConfig& config, std::mt19937_64& rng);

class PidController final : public BasalController {
 public:
  explicit PidController(PidConfig config, bool noisy = true);

  void reset(std::uint64_t seed) override;
  double basal(const Trajectory& history, std::size_t index) override;

  const PidGains& gains() const noexcept { return gains_; }
  double error_sum() const noexcept { return error_sum_; }

 private:
  PidConfig config_;
  bool noisy_;
  PidGains gains_;
  double error_sum_ = 0.0;
  double ou_ = 0.0;
  std::mt19937_64 rng_;
};

class ConstantController final : public BasalController {
 public:
  explicit ConstantController(double rate) : rate_(rate) {}
  double basal(const Trajectory&, std::size_t) override { return rate_; }

 private:
  double rate_;
};

struct BolusConfig {
  double carb_ratio = 10.0;        // g/U
  double correction_factor = 40.0; // mg/dL per U
  double g_targ_mgdl = 140.0;
  std::size_t carb_lookback_steps = 60;
  double carb_estimate_error_frac = 0.2;

  void validate() const;
};

/// Meal bolus: estimated carbs over the carb ratio, plus a correction toward
/// target only when no carbs were eaten in the look-back window.
double bolus(double carbs_g, double glucose_mgdl, double recent_carbs_g, const BolusConfig& config,
             std::mt19937_64& rng);

/// Episode hook applying `bolus` to each meal with its own seeded stream.
BolusFn make_bolus_fn(const BolusConfig& config, std::uint64_t seed);

BolusConfig bolus_config_for(const PatientParams& params, double target_mgdl = 140.0);

}  // namespace paint
