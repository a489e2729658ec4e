#include "paint/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "paint/error.hpp"

namespace paint {

FaultInjector default_faults() {
  FaultInjector f;
  f.mode = FaultMode::kCompressionLow;
  return f;
}

double max_basal_for(const PatientProfile& profile) { return profile.pid.max_basal; }

std::vector<Trajectory> generate_dataset(const PatientProfile& profile, const std::string& patient_id,
                                         const GenerationConfig& config) {
  if (config.samples == 0) throw Error(ErrorCode::kInvalidArgument, "sample count must be positive");
  if (config.episode_days < 1) throw Error(ErrorCode::kInvalidArgument, "episodes need at least one day");
  PidConfig pid = profile.pid;
  double bolus_target = 140.0;
  if (config.pid_target_mgdl) {
    pid.g_targ_mgdl = *config.pid_target_mgdl;
    bolus_target = *config.pid_target_mgdl;
  }
  pid.validate();
  const BolusConfig bolus = bolus_config_for(profile.params, bolus_target);
  std::vector<Trajectory> out;
  std::size_t collected = 0;
  for (std::int64_t e = 0; collected < config.samples; ++e) {
    EpisodeConfig ec;
    ec.days = config.episode_days;
    ec.seed = derive_seed(config.seed, 1000 + static_cast<std::uint64_t>(e));
    ec.episode_id = e;
    ec.patient_id = patient_id;
    ec.max_samples = config.samples - collected;
    PidController controller(pid, config.noisy_pid);
    auto traj = run_episode(profile.params, controller, make_bolus_fn(bolus, derive_seed(ec.seed, 77)),
                            profile.meals, config.faults, ec);
    collected += traj.size();
    out.push_back(std::move(traj));
  }
  return out;
}

std::uint64_t eval_episode_seed(std::uint64_t seed, std::size_t repeat) {
  return derive_seed(seed ^ 0x9e3779b97f4a7c15ULL, 5000 + repeat);
}

std::vector<EpisodeReport> evaluate(const PatientProfile& profile, const std::string& patient_id,
                                    const ControllerFactory& factory, const EvalConfig& config,
                                    std::vector<Trajectory>* episodes) {
  if (config.repeats == 0) throw Error(ErrorCode::kInvalidArgument, "need at least one repeat");
  const BolusConfig bolus = bolus_config_for(profile.params, config.bolus_target_mgdl);
  std::vector<EpisodeReport> reports;
  for (std::size_t r = 0; r < config.repeats; ++r) {
    EpisodeConfig ec;
    ec.days = config.days;
    ec.seed = eval_episode_seed(config.seed, r);
    ec.episode_id = static_cast<std::int64_t>(r);
    ec.patient_id = patient_id;
    auto controller = factory();
    auto traj = run_episode(profile.params, *controller, make_bolus_fn(bolus, derive_seed(ec.seed, 77)),
                            profile.meals, config.faults, ec);
    reports.push_back(score(traj));
    if (episodes) episodes->push_back(std::move(traj));
  }
  return reports;
}

ControllerFactory pid_factory(const PidConfig& pid, bool noisy) {
  return [pid, noisy] { return std::make_unique<PidController>(pid, noisy); };
}

ControllerFactory policy_factory(const Policy& policy, const PatientParams& params) {
  return [policy, params] { return std::make_unique<PolicyController>(policy, params); };
}

ReportSummary summarize(const std::vector<EpisodeReport>& reports) {
  auto med = [&](auto field) {
    std::vector<double> v;
    for (const auto& r : reports) v.push_back(field(r));
    return median(std::move(v));
  };
  ReportSummary s;
  s.magni_risk_total = med([](const EpisodeReport& r) { return r.magni_risk_total; });
  s.mean_glucose = med([](const EpisodeReport& r) { return r.mean_glucose; });
  s.tir_pct = med([](const EpisodeReport& r) { return r.tir_pct; });
  s.tbr_pct = med([](const EpisodeReport& r) { return r.tbr_pct; });
  s.cov_pct = med([](const EpisodeReport& r) { return r.cov_pct; });
  s.post_meal_tir_pct = med([](const EpisodeReport& r) { return r.post_meal_tir_pct; });
  s.post_event_cov_pct = med([](const EpisodeReport& r) { return r.post_event_cov_pct; });
  s.post_event_basal = med([](const EpisodeReport& r) { return r.post_event_basal; });
  s.mean_basal = med([](const EpisodeReport& r) { return r.mean_basal; });
  for (const auto& r : reports) s.terminated += r.terminated ? 1 : 0;
  return s;
}

}  // namespace paint
