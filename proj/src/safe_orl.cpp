#include "paint/safe_orl.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "paint/error.hpp"

namespace paint {

void Td3bcConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error(ErrorCode::kInvalidArgument, "gamma must be in (0, 1)");
  if (n_steps == 0) throw Error(ErrorCode::kInvalidArgument, "n_steps must be >= 1");
  if (batch_size == 0 || policy_update_freq == 0 || hidden == 0 || hidden_layers == 0) {
    throw Error(ErrorCode::kInvalidArgument, "sizes must be positive");
  }
  if (!(actor_lr > 0.0) || !(critic_lr > 0.0) || !(target_rate > 0.0) || target_rate > 1.0 ||
      !(reward_scale > 0.0) || !(critic_head_scale > 0.0) || policy_noise < 0.0 || noise_clip < 0.0 || alpha < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "rates must be positive");
  }
}

double to_unit_action(double basal, double max_basal) {
  return std::clamp(2.0 * basal / max_basal - 1.0, -1.0, 1.0);
}

double to_basal(double unit, double max_basal) {
  return std::clamp((unit + 1.0) * 0.5 * max_basal, 0.0, max_basal);
}

namespace {

nn::Mlp make_net(std::size_t in, const Td3bcConfig& config, nn::Activation head, double head_scale,
                 std::uint64_t seed) {
  std::vector<std::size_t> dims{in};
  std::vector<nn::Activation> acts;
  for (std::size_t l = 0; l < config.hidden_layers; ++l) {
    dims.push_back(config.hidden);
    acts.push_back(nn::Activation::kRelu);
  }
  dims.push_back(1);
  acts.push_back(head);
  return nn::Mlp(dims, acts, seed, head_scale);
}

nn::Matrix stack(const nn::Matrix& states, const nn::Matrix& actions) {
  nn::Matrix x(states.rows() + 1, states.cols());
  x.topRows(states.rows()) = states;
  x.bottomRows(1) = actions;
  return x;
}

}  // namespace

nn::Mlp make_actor(const Td3bcConfig& config, std::uint64_t seed) {
  return make_net(kStateDim, config, nn::Activation::kTanh, 0.01, seed);
}

nn::Mlp make_critic(const Td3bcConfig& config, std::uint64_t seed, double head_scale) {
  return make_net(kStateDim + 1, config, nn::Activation::kIdentity, head_scale, seed);
}

double Policy::act(const StateVector& state) const {
  const StateVector z = normalizer.normalize(state);
  nn::Matrix x(kStateDim, 1);
  std::copy(z.begin(), z.end(), x.data());
  return to_basal(actor.forward(x)(0, 0), max_basal);
}

nn::Matrix Policy::act_unit(const nn::Matrix& normalized_states) const {
  return actor.forward(normalized_states);
}

ActorCritic::ActorCritic(nn::Mlp actor_init, nn::Mlp critic1_init, nn::Mlp critic2_init,
                         const Td3bcConfig& config)
    : actor(actor_init),
      actor_target(std::move(actor_init)),
      critic1(critic1_init),
      critic2(critic2_init),
      critic1_target(std::move(critic1_init)),
      critic2_target(std::move(critic2_init)) {
  actor_opt = nn::AdamState::for_network(actor, config.actor_lr);
  critic1_opt = nn::AdamState::for_network(critic1, config.critic_lr);
  critic2_opt = nn::AdamState::for_network(critic2, config.critic_lr);
}

nn::Matrix critic_targets(const TransitionBatch& batch, const ActorCritic& nets,
                          const Td3bcConfig& config, std::mt19937_64& rng) {
  const Eigen::Index b = batch.states.cols();
  nn::Matrix next_actions = nets.actor_target.forward(batch.next_states);
  std::normal_distribution<double> noise(0.0, config.policy_noise);
  for (Eigen::Index j = 0; j < b; ++j) {
    const double eps = config.policy_noise > 0.0
                           ? std::clamp(noise(rng), -config.noise_clip, config.noise_clip)
                           : 0.0;
    next_actions(0, j) = std::clamp(next_actions(0, j) + eps, -1.0, 1.0);
  }
  const nn::Matrix x_next = stack(batch.next_states, next_actions);
  const nn::Matrix q1 = nets.critic1_target.forward(x_next);
  const nn::Matrix q2 = nets.critic2_target.forward(x_next);
  nn::Matrix y(1, b);
  for (Eigen::Index j = 0; j < b; ++j) {
    const double bootstrap = batch.bootstrap(0, j);
    y(0, j) = batch.returns(0, j) / config.reward_scale +
              (bootstrap > 0.0 ? bootstrap * std::min(q1(0, j), q2(0, j)) : 0.0);
  }
  return y;
}

CriticLosses critic_update(const TransitionBatch& batch, ActorCritic& nets, const Td3bcConfig& config,
                           std::mt19937_64& rng) {
  const nn::Matrix y = critic_targets(batch, nets, config, rng);
  const nn::Matrix x = stack(batch.states, batch.actions);
  CriticLosses out;
  out.mean_target = y.mean();
  nn::ForwardCache cache;
  nn::Matrix grad;
  out.critic1 = nn::mse_loss(nets.critic1.forward(x, cache), y, &grad);
  nn::adam_step(nets.critic1, nets.critic1.backward(cache, grad), nets.critic1_opt);
  out.critic2 = nn::mse_loss(nets.critic2.forward(x, cache), y, &grad);
  nn::adam_step(nets.critic2, nets.critic2.backward(cache, grad), nets.critic2_opt);
  return out;
}

ActorLoss actor_objective(const nn::Mlp& actor, const nn::Mlp& critic, const nn::Matrix& states,
                          const nn::Matrix& bc_targets, double weight, nn::ParamSet* grad) {
  const double b = static_cast<double>(states.cols());
  nn::ForwardCache actor_cache, critic_cache;
  const nn::Matrix u = actor.forward(states, actor_cache);
  const nn::Matrix q = critic.forward(stack(states, u), critic_cache);
  ActorLoss out;
  out.mean_q = q.mean();
  const double mean_abs_q = q.cwiseAbs().mean();
  out.lambda_hat = weight > 0.0 ? weight / std::max(mean_abs_q, 1e-12) : 0.0;
  const nn::Matrix diff = u - bc_targets;
  out.bc = diff.squaredNorm() / b;
  out.total = -out.lambda_hat * out.mean_q + out.bc;
  if (grad) {
    nn::Matrix du = (2.0 / b) * diff;
    if (out.lambda_hat > 0.0) {
      nn::Matrix dx;
      critic.backward(critic_cache, nn::Matrix::Constant(1, states.cols(), -out.lambda_hat / b), &dx);
      du += dx.bottomRows(1);
    }
    *grad = actor.backward(actor_cache, du);
  }
  return out;
}

ActorLoss actor_update(const TransitionBatch& batch, ActorCritic& nets, double weight,
                       const Td3bcConfig& config) {
  nn::ParamSet grad;
  const ActorLoss loss = actor_objective(nets.actor, nets.critic1, batch.states, batch.bc_targets, weight, &grad);
  nn::adam_step(nets.actor, grad, nets.actor_opt);
  nn::soft_update(nets.critic1_target, nets.critic1, config.target_rate);
  nn::soft_update(nets.critic2_target, nets.critic2, config.target_rate);
  nn::soft_update(nets.actor_target, nets.actor, config.target_rate);
  return loss;
}

TransitionSource::TransitionSource(const OfflineDataset& data, const Normalizer& normalizer,
                                   double max_basal, std::span<const double> rewards,
                                   const Td3bcConfig& config, std::span<const double> bc_targets)
    : views_(assemble(data, rewards, config.n_steps, config.gamma)) {
  if (views_.empty()) throw Error(ErrorCode::kInvalidArgument, "dataset has no transitions");
  if (!bc_targets.empty() && bc_targets.size() != data.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "one behaviour target per sample required");
  }
  states_.resize(kStateDim, static_cast<Eigen::Index>(data.size()));
  unit_actions_.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const StateVector z = normalizer.normalize(data.states[i]);
    std::copy(z.begin(), z.end(), states_.col(static_cast<Eigen::Index>(i)).data());
    unit_actions_[i] = to_unit_action(data.actions[i], max_basal);
  }
  bc_targets_ = bc_targets.empty() ? unit_actions_ : std::vector<double>(bc_targets.begin(), bc_targets.end());
}

TransitionBatch TransitionSource::batch(std::span<const std::size_t> view_indices) const {
  const auto b = static_cast<Eigen::Index>(view_indices.size());
  TransitionBatch out;
  out.states.resize(kStateDim, b);
  out.actions.resize(1, b);
  out.returns.resize(1, b);
  out.next_states = nn::Matrix::Zero(kStateDim, b);
  out.bootstrap.resize(1, b);
  out.bc_targets.resize(1, b);
  for (Eigen::Index j = 0; j < b; ++j) {
    const auto& v = views_[view_indices[static_cast<std::size_t>(j)]];
    out.states.col(j) = states_.col(static_cast<Eigen::Index>(v.state));
    out.actions(0, j) = unit_actions_[v.state];
    out.bc_targets(0, j) = bc_targets_[v.state];
    out.returns(0, j) = v.discounted_return;
    if (v.next_state) {
      out.next_states.col(j) = states_.col(static_cast<Eigen::Index>(*v.next_state));
      out.bootstrap(0, j) = v.bootstrap_discount;
    } else {
      out.bootstrap(0, j) = 0.0;
    }
  }
  return out;
}

namespace {

struct RunSpec {
  std::size_t epochs;
  double actor_weight;
  std::size_t warmup_epochs = 0;
};

void run_training(const TransitionSource& source, ActorCritic& nets, const Td3bcConfig& config,
                  const RunSpec& spec, std::uint64_t seed, TrainingLog* log, const ProgressFn& progress) {
  const std::size_t per_epoch = config.steps_per_epoch > 0
                                    ? config.steps_per_epoch
                                    : (source.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t warmup = per_epoch * spec.warmup_epochs;
  const std::size_t total = per_epoch * spec.epochs + warmup;
  UniformSampler sampler(source.size(), derive_seed(seed, 11));
  std::mt19937_64 noise_rng(derive_seed(seed, 12));
  CriticLosses last_critic;
  ActorLoss last_actor;
  bool finite = true;
  for (std::size_t step = 1; step <= total; ++step) {
    const auto idx = sampler.batch(config.batch_size);
    const TransitionBatch batch = source.batch(idx);
    last_critic = critic_update(batch, nets, config, noise_rng);
    if (!std::isfinite(last_critic.critic1) || !std::isfinite(last_critic.critic2) ||
        !std::isfinite(last_critic.mean_target)) {
      finite = false;
    }
    if (progress && (step % 1000 == 0 || step == total)) progress(step, total, last_critic);
    if (step % config.policy_update_freq != 0) continue;
    if (step > warmup) {
      last_actor = actor_update(batch, nets, spec.actor_weight, config);
    } else {
      nn::soft_update(nets.critic1_target, nets.critic1, config.target_rate);
      nn::soft_update(nets.critic2_target, nets.critic2, config.target_rate);
    }
  }
  if (!finite || !nets.actor.all_finite() || !nets.critic1.all_finite()) {
    if (log) log->targets_finite = false;
    throw Error(ErrorCode::kSimulationFault, "training diverged: non-finite values");
  }
  if (log) {
    log->steps = total;
    log->final_critic_loss = 0.5 * (last_critic.critic1 + last_critic.critic2);
    log->final_actor_bc = last_actor.bc;
    log->final_mean_q = last_actor.mean_q;
    log->targets_finite = finite;
  }
}

}  // namespace

Policy train_priori(const OfflineDataset& data, const Normalizer& normalizer, double max_basal,
                    const Td3bcConfig& config, TrainingLog* log, const ProgressFn& progress) {
  config.validate();
  if (!(max_basal > 0.0)) throw Error(ErrorCode::kInvalidArgument, "max_basal must be positive");
  const auto rewards = safety_rewards(data);
  TransitionSource source(data, normalizer, max_basal, rewards, config);
  ActorCritic nets(make_actor(config, derive_seed(config.seed, 1)),
                   make_critic(config, derive_seed(config.seed, 2)),
                   make_critic(config, derive_seed(config.seed, 3)), config);
  run_training(source, nets, config, {config.epochs_pretrain, config.alpha}, config.seed, log, progress);
  return Policy{std::move(nets.actor), normalizer, max_basal};
}

Policy tune_policy(const OfflineDataset& data, const Policy& priori, std::span<const double> rewards,
                   double lambda, const Td3bcConfig& config, TrainingLog* log,
                   const ProgressFn& progress) {
  config.validate();
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::kInvalidArgument, "lambda must be >= 0");
  }
  // The anchor is the priori's action on every dataset state.
  std::vector<double> anchor(data.size());
  {
    TransitionSource probe(data, priori.normalizer, priori.max_basal, rewards, config);
    const nn::Matrix u = priori.act_unit(probe.normalized_states());
    for (std::size_t i = 0; i < data.size(); ++i) anchor[i] = u(0, static_cast<Eigen::Index>(i));
  }
  TransitionSource source(data, priori.normalizer, priori.max_basal, rewards, config, anchor);
  const std::uint64_t seed = derive_seed(config.seed, 100);
  ActorCritic nets(priori.actor, make_critic(config, derive_seed(seed, 2), config.critic_head_scale),
                   make_critic(config, derive_seed(seed, 3), config.critic_head_scale), config);
  run_training(source, nets, config, {config.epochs_tune, lambda, config.epochs_critic_warmup}, seed, log, progress);
  return Policy{std::move(nets.actor), priori.normalizer, priori.max_basal};
}

void save_policy(const std::string& path, const Policy& policy) {
  nn::Checkpoint ckpt;
  ckpt.net = policy.actor;
  ckpt.normalizer = policy.normalizer;
  ckpt.metadata["max_basal"] = policy.max_basal;
  nn::save_checkpoint(path, ckpt);
}

Policy load_policy(const std::string& path) {
  auto ckpt = nn::load_checkpoint(path);
  if (ckpt.net.input_dim() != kStateDim || ckpt.net.output_dim() != 1) {
    throw Error(ErrorCode::kDimensionMismatch, "not an actor network: " + path);
  }
  if (!ckpt.normalizer || !ckpt.metadata.contains("max_basal")) {
    throw Error(ErrorCode::kIo, "actor checkpoint lacks normalizer or action scale: " + path);
  }
  return Policy{std::move(ckpt.net), *ckpt.normalizer, ckpt.metadata.at("max_basal")};
}

void PolicyBundle::save(const std::string& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path root(dir);
  save_policy((root / "priori.ckpt").string(), priori);
  if (reward) save_reward_model((root / "reward.ckpt").string(), *reward);
  else fs::remove(root / "reward.ckpt");
  if (tuned) save_policy((root / "tuned.ckpt").string(), *tuned);
  else fs::remove(root / "tuned.ckpt");
  nlohmann::json meta{{"lambda", lambda},
                      {"patient_id", patient_id},
                      {"preference", preference},
                      {"dataset_hash", dataset_hash},
                      {"seed", seed}};
  std::ofstream out(root / "meta.json", std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write bundle metadata in " + dir);
  out << meta.dump(2) << '\n';
}

PolicyBundle PolicyBundle::load(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  if (!fs::exists(root / "priori.ckpt")) throw Error(ErrorCode::kNotFound, "no priori policy in " + dir);
  PolicyBundle b;
  b.priori = load_policy((root / "priori.ckpt").string());
  if (fs::exists(root / "reward.ckpt")) b.reward = load_reward_model((root / "reward.ckpt").string());
  if (fs::exists(root / "tuned.ckpt")) b.tuned = load_policy((root / "tuned.ckpt").string());
  std::ifstream in(root / "meta.json");
  if (in) {
    try {
      const auto meta = nlohmann::json::parse(in);
      b.lambda = meta.value("lambda", 0.0);
      b.patient_id = meta.value("patient_id", std::string{});
      b.preference = meta.value("preference", std::string{});
      b.dataset_hash = meta.value("dataset_hash", std::string{});
      b.seed = meta.value("seed", std::uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kIo, std::string("bad bundle metadata: ") + e.what());
    }
  }
  return b;
}

PolicyController::PolicyController(Policy policy, PatientParams params)
    : policy_(std::move(policy)), params_(std::move(params)) {}

void PolicyController::reset(std::uint64_t) {
  basal_sum_ = 0.0;
  basal_count_ = 0;
}

double PolicyController::basal(const Trajectory& history, std::size_t index) {
  while (basal_count_ < index) basal_sum_ += history.basal[basal_count_++];
  const double mean_basal = index > 0 ? basal_sum_ / static_cast<double>(index) : 0.0;
  return policy_.act(build_state(history, index, params_, mean_basal));
}

}  // namespace paint
