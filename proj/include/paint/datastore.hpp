#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "paint/features.hpp"
#include "paint/patient_sim.hpp"
#include "paint/trajectory.hpp"

namespace paint {

inline constexpr std::uint32_t kTrajectoryFormatVersion = 1;

// Columnar binary trajectory records. Output bytes depend only on content.
void write_trajectory(std::ostream& out, const Trajectory& traj);
Trajectory read_trajectory(std::istream& in);

/// A dataset file holds a count followed by trajectory records.
void write_dataset_file(const std::string& path, std::span<const Trajectory> episodes);
std::vector<Trajectory> read_dataset_file(const std::string& path);

/// CSV with columns t,glucose_mgdl,basal_u_min,bolus_u,carbs_g.
void write_csv(std::ostream& out, const Trajectory& traj);

/// FNV-1a 64 over the serialized records, as 16 hex digits.
std::string dataset_hash(std::span<const Trajectory> episodes);

/// Episodes of one patient with features precomputed into flat arrays.
/// Flat index = offsets[episode] + t.
struct OfflineDataset {
  PatientParams params;
  std::vector<Trajectory> episodes;
  std::vector<StateVector> states;
  std::vector<double> actions;
  std::vector<std::size_t> offsets;

  static OfflineDataset build(const PatientParams& params, std::vector<Trajectory> episodes);

  std::size_t size() const noexcept { return actions.size(); }
  std::size_t flat_index(std::size_t episode, std::size_t t) const;
  /// Episode containing a flat index.
  std::size_t episode_of(std::size_t flat) const;
  std::string hash() const { return dataset_hash(episodes); }
};

inline constexpr double kTerminationPenalty = -100.0;

/// Per-sample safety reward: minus the Magni risk of the next reading, with
/// the termination penalty on an episode's terminal sample. The final sample
/// of a truncated episode has no successor and gets 0 (never used as a
/// transition).
std::vector<double> safety_rewards(const OfflineDataset& data);

/// One n-step transition. Rewards are `rewards[reward_begin, reward_begin +
/// reward_count)` of the reward column it was assembled from.
struct TransitionView {
  std::size_t episode = 0;
  std::size_t t = 0;
  std::size_t state = 0;  // flat index of s_t
  double action = 0.0;
  std::size_t reward_begin = 0;
  std::size_t reward_count = 0;
  double discounted_return = 0.0;
  /// Flat index of the bootstrap state, absent when the episode terminated.
  std::optional<std::size_t> next_state;
  double bootstrap_discount = 0.0;  // gamma^reward_count
  bool done = false;
};

/// Builds transitions for every sample with a successor (and every terminal
/// sample). Views never cross episode boundaries; truncation at an episode end
/// bootstraps from that episode's last state.
std::vector<TransitionView> assemble(const OfflineDataset& data, std::span<const double> rewards,
                                     std::size_t n_steps, double gamma);

/// Seeded uniform index sampler with replacement.
class UniformSampler {
 public:
  UniformSampler(std::size_t population, std::uint64_t seed);
  std::size_t next();
  std::vector<std::size_t> batch(std::size_t n);

 private:
  std::mt19937_64 rng_;
  std::uniform_int_distribution<std::size_t> dist_;
};

}  // namespace paint
