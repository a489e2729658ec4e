#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "paint/experiments.hpp"

namespace paint {

/// Dataset file plus the derived features of its patient.
struct LoadedDataset {
  std::string path;
  std::string patient;
  PatientProfile profile;
  OfflineDataset data;
};

LoadedDataset load_dataset(const std::string& path);

/// Phase 1 on a dataset; the bundle records the dataset hash and seed.
PolicyBundle train_priori_bundle(const LoadedDataset& ds, const Td3bcConfig& config);

/// Fits the bundle's reward model on labels. Clears any tuned actor.
void train_reward_into(PolicyBundle& bundle, const LoadedDataset& ds, const LabelSet& labels,
                       const RewardConfig& config);

/// Phase 2 with the bundle's reward model. Throws kNotFound without one and
/// kInvalidArgument when the dataset is not the bundle's.
void tune_into(PolicyBundle& bundle, const LoadedDataset& ds, double lambda, const Td3bcConfig& config);

struct BundleReport {
  std::vector<EpisodeReport> priori;
  std::vector<EpisodeReport> tuned;  // empty without a tuned actor
};

/// Paired evaluation of priori and (when present) tuned actors.
BundleReport report_bundle(const PolicyBundle& bundle, const EvalConfig& config);

nlohmann::ordered_json report_json(const BundleReport& report, const PolicyBundle& bundle);

nlohmann::ordered_json report_json(const EpisodeReport& r);

/// `count` indices spread evenly over [0, n), first and last included.
std::vector<std::size_t> downsample_indices(std::size_t n, std::size_t count);

}  // namespace paint
