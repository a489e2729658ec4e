#include "paint/workflow.hpp"

#include <cmath>

#include "paint/error.hpp"

namespace paint {

LoadedDataset load_dataset(const std::string& path) {
  auto episodes = read_dataset_file(path);
  if (episodes.empty()) throw Error(ErrorCode::kInvalidArgument, "dataset has no episodes: " + path);
  const std::string patient = episodes.front().patient_id;
  for (const auto& e : episodes) {
    if (e.patient_id != patient) throw Error(ErrorCode::kInvalidArgument, "dataset mixes patients: " + path);
  }
  LoadedDataset ds;
  ds.path = path;
  ds.patient = patient;
  ds.profile = load_patient(patient);
  ds.data = OfflineDataset::build(ds.profile.params, std::move(episodes));
  return ds;
}

PolicyBundle train_priori_bundle(const LoadedDataset& ds, const Td3bcConfig& config) {
  PolicyBundle b;
  b.priori = train_priori(ds.data, Normalizer::fit(ds.data.states), max_basal_for(ds.profile), config);
  b.patient_id = ds.patient;
  b.dataset_hash = ds.data.hash();
  b.seed = config.seed;
  return b;
}

namespace {

void check_dataset(const PolicyBundle& bundle, const LoadedDataset& ds) {
  if (!bundle.dataset_hash.empty() && bundle.dataset_hash != ds.data.hash()) {
    throw Error(ErrorCode::kInvalidArgument, "dataset " + ds.path + " is not the one the bundle was trained on");
  }
}

}  // namespace

void train_reward_into(PolicyBundle& bundle, const LoadedDataset& ds, const LabelSet& labels,
                       const RewardConfig& config) {
  check_dataset(bundle, ds);
  bundle.reward = train_reward_model(ds.data, bundle.priori.normalizer, bundle.priori.max_basal, labels, config);
  bundle.tuned.reset();
  bundle.lambda = 0.0;
}

void tune_into(PolicyBundle& bundle, const LoadedDataset& ds, double lambda, const Td3bcConfig& config) {
  check_dataset(bundle, ds);
  if (!bundle.reward) throw Error(ErrorCode::kNotFound, "bundle has no reward model; run train-reward first");
  Td3bcConfig cfg = config;
  cfg.hidden = bundle.priori.actor.layers().front().out_dim();
  cfg.hidden_layers = bundle.priori.actor.layers().size() - 1;
  const auto rhat = relabel(ds.data, *bundle.reward);
  bundle.tuned = tune_policy(ds.data, bundle.priori, rhat, lambda, cfg);
  bundle.lambda = lambda;
}

BundleReport report_bundle(const PolicyBundle& bundle, const EvalConfig& config) {
  const auto profile = load_patient(bundle.patient_id);
  BundleReport r;
  r.priori = evaluate(profile, bundle.patient_id, policy_factory(bundle.priori, profile.params), config);
  if (bundle.tuned) r.tuned = evaluate(profile, bundle.patient_id, policy_factory(*bundle.tuned, profile.params), config);
  return r;
}

nlohmann::ordered_json report_json(const EpisodeReport& r) {
  return nlohmann::ordered_json::parse(to_json_line(r));
}

nlohmann::ordered_json report_json(const BundleReport& report, const PolicyBundle& bundle) {
  nlohmann::ordered_json j{{"patient_id", bundle.patient_id},
                           {"dataset_hash", bundle.dataset_hash},
                           {"lambda", bundle.lambda},
                           {"priori", summary_json(summarize(report.priori))}};
  if (!report.tuned.empty()) {
    const auto a = summarize(report.priori);
    const auto b = summarize(report.tuned);
    j["tuned"] = summary_json(b);
    nlohmann::ordered_json delta;
    const auto ja = summary_json(a), jb = summary_json(b);
    for (const auto& [k, v] : ja.items()) {
      if (v.is_number_float()) delta[k] = jb[k].get<double>() - v.get<double>();
    }
    j["delta"] = delta;
  }
  auto episodes = nlohmann::ordered_json::array();
  for (const auto& e : report.priori) episodes.push_back(report_json(e));
  j["priori_episodes"] = episodes;
  if (!report.tuned.empty()) {
    episodes = nlohmann::ordered_json::array();
    for (const auto& e : report.tuned) episodes.push_back(report_json(e));
    j["tuned_episodes"] = episodes;
  }
  return j;
}

std::vector<std::size_t> downsample_indices(std::size_t n, std::size_t count) {
  if (count == 0 || count >= n) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    return all;
  }
  std::vector<std::size_t> out(count);
  if (count == 1) return {0};
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = static_cast<std::size_t>(std::llround(static_cast<double>(i) * static_cast<double>(n - 1) /
                                                   static_cast<double>(count - 1)));
  }
  return out;
}

}  // namespace paint
