#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "paint/datastore.hpp"
#include "paint/features.hpp"
#include "paint/nn.hpp"

namespace paint {

/// A sketched reward for one dataset sample.
struct SketchLabel {
  std::int64_t episode_id = 0;
  std::size_t t = 0;
  double reward = 0.0;

  /// Throws kInvalidArgument unless reward is finite and within [-1, 1].
  void validate() const;
};

/// Unique-per-sample label collection. Re-adding an identical label is a
/// no-op; a different reward for the same sample is kDuplicateLabel.
class LabelSet {
 public:
  void add(const SketchLabel& label);
  /// All-or-nothing batch insert.
  void add_all(std::span<const SketchLabel> labels);

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  /// Labels in (episode_id, t) order.
  std::vector<SketchLabel> labels() const;
  std::vector<SketchLabel> episode(std::int64_t episode_id) const;

  /// Line-delimited {"episode_id":..,"t":..,"reward":..} records.
  void write_jsonl(std::ostream& out) const;
  static LabelSet read_jsonl(std::istream& in);
  void save(const std::string& path) const;
  static LabelSet load(const std::string& path);

 private:
  std::map<std::pair<std::int64_t, std::size_t>, double> labels_;
};

/// Labels for a set of flat dataset indices with the given rewards.
std::vector<SketchLabel> make_labels(const OfflineDataset& data, std::span<const std::size_t> samples,
                                     std::span<const double> rewards);

/// Flat index of a label's sample; kNotFound when it does not exist.
std::size_t resolve_label(const OfflineDataset& data, const SketchLabel& label);

/// Mini-batches with an equal number of draws from each non-empty stratum of
/// k uniform bins over [-1, 1]. Indices refer to positions in `rewards`.
class StratifiedSampler {
 public:
  StratifiedSampler(std::span<const double> rewards, std::size_t k, std::uint64_t seed);

  std::vector<std::size_t> batch(std::size_t batch_size);

  std::size_t strata() const noexcept { return k_; }
  /// Bin of a reward value in [-1, 1].
  std::size_t stratum_of(double reward) const;
  const std::vector<std::vector<std::size_t>>& members() const noexcept { return members_; }

 private:
  std::size_t k_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<std::size_t> nonempty_;
  std::mt19937_64 rng_;
};

struct RewardConfig {
  std::vector<std::size_t> hidden{256, 256, 256};
  double lr = 4e-5;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 500;
  std::size_t strata = 10;
  double validation_fraction = 0.1;
  std::size_t patience = 20;
  std::size_t min_labels = 50;
  std::uint64_t seed = 0;
};

/// Reward network over (normalized state, action mapped to [-1, 1]).
struct RewardModel {
  nn::Mlp net;
  Normalizer normalizer;
  double max_basal = 1.0;
  double validation_loss = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;

  static constexpr std::size_t kInputDim = kStateDim + 1;

  double predict(const StateVector& state, double basal) const;
  std::vector<double> predict(std::span<const StateVector> states, std::span<const double> basal) const;
};

/// Network input column for one sample.
void reward_input(const Normalizer& norm, double max_basal, const StateVector& state, double basal,
                  double* column);

/// Trains on the labeled samples of `data`. Throws kInsufficientLabels below
/// `config.min_labels`, kNotFound for labels without a sample.
RewardModel train_reward_model(const OfflineDataset& data, const Normalizer& normalizer,
                               double max_basal, const LabelSet& labels, const RewardConfig& config);

/// Predicted reward for every dataset sample, clamped to [-1, 1].
std::vector<double> relabel(const OfflineDataset& data, const RewardModel& model);

void save_reward_model(const std::string& path, const RewardModel& model);
RewardModel load_reward_model(const std::string& path);

}  // namespace paint
