#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "paint/datastore.hpp"
#include "paint/features.hpp"
#include "paint/nn.hpp"
#include "paint/patient_sim.hpp"
#include "paint/reward_model.hpp"

namespace paint {

struct Td3bcConfig {
  double gamma = 0.999;
  std::size_t n_steps = 10;
  std::size_t batch_size = 256;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double policy_noise = 0.2;
  double noise_clip = 0.5;
  std::size_t policy_update_freq = 2;
  double target_rate = 5e-3;
  double alpha = 2.5;
  double reward_scale = 1000.0;
  std::size_t epochs_pretrain = 300;
  std::size_t epochs_tune = 150;
  /// Tuning epochs that fit the fresh critics to the frozen priori before
  /// the actor moves; they come on top of `epochs_tune`.
  std::size_t epochs_critic_warmup = 600;
  std::size_t hidden = 256;
  std::size_t hidden_layers = 2;
  /// Output-layer init scale of the fresh tuning critics (Q starts near 0).
  double critic_head_scale = 0.01;
  /// Gradient steps per epoch; 0 means one pass over the transitions.
  std::size_t steps_per_epoch = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Actions are handled on [-1, 1]; basal = (u + 1) / 2 * max_basal.
double to_unit_action(double basal, double max_basal);
double to_basal(double unit, double max_basal);

nn::Mlp make_actor(const Td3bcConfig& config, std::uint64_t seed);
nn::Mlp make_critic(const Td3bcConfig& config, std::uint64_t seed, double head_scale = 1.0);

/// Deterministic policy: normalized state in, basal out.
struct Policy {
  nn::Mlp actor;
  Normalizer normalizer;
  double max_basal = 1.0;

  double act(const StateVector& state) const;
  /// Unit actions for a batch of normalized state columns.
  nn::Matrix act_unit(const nn::Matrix& normalized_states) const;
};

/// Online networks, targets and optimizers of one training run.
struct ActorCritic {
  nn::Mlp actor, actor_target;
  nn::Mlp critic1, critic2, critic1_target, critic2_target;
  nn::AdamState actor_opt, critic1_opt, critic2_opt;

  ActorCritic(nn::Mlp actor_init, nn::Mlp critic1_init, nn::Mlp critic2_init, const Td3bcConfig& config);
};

/// Sampled mini-batch of n-step transitions, already in network units.
struct TransitionBatch {
  nn::Matrix states;          // kStateDim x B, normalized
  nn::Matrix actions;         // 1 x B, unit actions
  nn::Matrix returns;         // 1 x B, discounted n-step sum of raw rewards
  nn::Matrix next_states;     // kStateDim x B (zero columns when not bootstrapping)
  nn::Matrix bootstrap;       // 1 x B, gamma^k or 0 for terminal transitions
  nn::Matrix bc_targets;      // 1 x B, unit actions the actor is anchored to
};

/// Shared TD target: returns / reward_scale + bootstrap * min(Q1', Q2') at
/// the target policy's smoothed action.
nn::Matrix critic_targets(const TransitionBatch& batch, const ActorCritic& nets,
                          const Td3bcConfig& config, std::mt19937_64& rng);

struct CriticLosses {
  double critic1 = 0.0;
  double critic2 = 0.0;
  double mean_target = 0.0;
};

CriticLosses critic_update(const TransitionBatch& batch, ActorCritic& nets, const Td3bcConfig& config,
                           std::mt19937_64& rng);

struct ActorLoss {
  double total = 0.0;
  double bc = 0.0;
  double mean_q = 0.0;
  double lambda_hat = 0.0;
};

/// Loss -lambda_hat * mean Q1(s, pi(s)) + mean (pi(s) - bc_target)^2 with
/// lambda_hat = weight / mean |Q1(s, pi(s))|, and its actor gradient.
ActorLoss actor_objective(const nn::Mlp& actor, const nn::Mlp& critic, const nn::Matrix& states,
                          const nn::Matrix& bc_targets, double weight, nn::ParamSet* grad = nullptr);

/// One actor step (behaviour cloning toward bc_targets) plus target updates.
ActorLoss actor_update(const TransitionBatch& batch, ActorCritic& nets, double weight,
                       const Td3bcConfig& config);

/// Builds n-step transition batches from a dataset and a reward column.
class TransitionSource {
 public:
  TransitionSource(const OfflineDataset& data, const Normalizer& normalizer, double max_basal,
                   std::span<const double> rewards, const Td3bcConfig& config,
                   std::span<const double> bc_targets = {});

  std::size_t size() const noexcept { return views_.size(); }
  const std::vector<TransitionView>& views() const noexcept { return views_; }
  TransitionBatch batch(std::span<const std::size_t> view_indices) const;
  const nn::Matrix& normalized_states() const noexcept { return states_; }

 private:
  std::vector<TransitionView> views_;
  nn::Matrix states_;
  std::vector<double> unit_actions_;
  std::vector<double> bc_targets_;
};

struct TrainingLog {
  std::size_t steps = 0;
  double final_critic_loss = 0.0;
  double final_actor_bc = 0.0;
  double final_mean_q = 0.0;
  bool targets_finite = true;
};

using ProgressFn = std::function<void(std::size_t step, std::size_t total, const CriticLosses&)>;

/// Phase 1: TD3+BC on safety rewards, cloning the dataset actions.
Policy train_priori(const OfflineDataset& data, const Normalizer& normalizer, double max_basal,
                    const Td3bcConfig& config, TrainingLog* log = nullptr,
                    const ProgressFn& progress = {});

/// Phase 2: fresh critics on preference rewards, actor warm-started from and
/// cloned toward the priori. Throws kInvalidArgument for lambda < 0.
Policy tune_policy(const OfflineDataset& data, const Policy& priori, std::span<const double> rewards,
                   double lambda, const Td3bcConfig& config, TrainingLog* log = nullptr,
                   const ProgressFn& progress = {});

void save_policy(const std::string& path, const Policy& policy);
Policy load_policy(const std::string& path);

/// Priori + optional reward model + optional tuned actor, stored as a directory.
struct PolicyBundle {
  Policy priori;
  std::optional<RewardModel> reward;
  std::optional<Policy> tuned;
  double lambda = 0.0;
  std::string patient_id;
  std::string preference;
  std::string dataset_hash;
  std::uint64_t seed = 0;

  const Policy& active() const { return tuned ? *tuned : priori; }
  double act(const StateVector& state) const { return active().act(state); }

  void save(const std::string& dir) const;
  static PolicyBundle load(const std::string& dir);
};

/// Basal controller driven by a policy; featurizes the live history.
class PolicyController final : public BasalController {
 public:
  PolicyController(Policy policy, PatientParams params);

  void reset(std::uint64_t seed) override;
  double basal(const Trajectory& history, std::size_t index) override;

 private:
  Policy policy_;
  PatientParams params_;
  double basal_sum_ = 0.0;
  std::size_t basal_count_ = 0;
};

}  // namespace paint
