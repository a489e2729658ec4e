#include "paint/reward_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <numeric>

#include "paint/error.hpp"

namespace paint {

void SketchLabel::validate() const {
  if (!std::isfinite(reward) || reward < -1.0 || reward > 1.0) {
    throw Error(ErrorCode::kInvalidArgument,
                "label reward " + std::to_string(reward) + " outside [-1, 1]");
  }
}

void LabelSet::add(const SketchLabel& label) {
  label.validate();
  const auto key = std::make_pair(label.episode_id, label.t);
  const auto it = labels_.find(key);
  if (it != labels_.end()) {
    if (it->second != label.reward) {
      throw Error(ErrorCode::kDuplicateLabel,
                  "conflicting label for episode " + std::to_string(label.episode_id) + " t " +
                      std::to_string(label.t));
    }
    return;
  }
  labels_.emplace(key, label.reward);
}

void LabelSet::add_all(std::span<const SketchLabel> labels) {
  LabelSet staged = *this;
  for (const auto& l : labels) staged.add(l);
  *this = std::move(staged);
}

std::vector<SketchLabel> LabelSet::labels() const {
  std::vector<SketchLabel> out;
  out.reserve(labels_.size());
  for (const auto& [key, reward] : labels_) out.push_back({key.first, key.second, reward});
  return out;
}

std::vector<SketchLabel> LabelSet::episode(std::int64_t episode_id) const {
  std::vector<SketchLabel> out;
  auto it = labels_.lower_bound({episode_id, 0});
  for (; it != labels_.end() && it->first.first == episode_id; ++it) {
    out.push_back({episode_id, it->first.second, it->second});
  }
  return out;
}

void LabelSet::write_jsonl(std::ostream& out) const {
  for (const auto& [key, reward] : labels_) {
    nlohmann::json j{{"episode_id", key.first}, {"t", key.second}, {"reward", reward}};
    out << j.dump() << '\n';
  }
}

LabelSet LabelSet::read_jsonl(std::istream& in) {
  LabelSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SketchLabel l;
      l.episode_id = j.at("episode_id").get<std::int64_t>();
      const auto t = j.at("t").get<std::int64_t>();
      if (t < 0) throw Error(ErrorCode::kInvalidArgument, "negative timestep");
      l.t = static_cast<std::size_t>(t);
      l.reward = j.at("reward").get<double>();
      set.add(l);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kInvalidArgument,
                  "label line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return set;
}

void LabelSet::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  write_jsonl(out);
}

LabelSet LabelSet::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open " + path);
  return read_jsonl(in);
}

std::vector<SketchLabel> make_labels(const OfflineDataset& data, std::span<const std::size_t> samples,
                                     std::span<const double> rewards) {
  if (samples.size() != rewards.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "one reward per sample required");
  }
  std::vector<SketchLabel> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::size_t e = data.episode_of(samples[i]);
    out.push_back({data.episodes[e].episode_id, samples[i] - data.offsets[e],
                   std::clamp(rewards[i], -1.0, 1.0)});
  }
  return out;
}

std::size_t resolve_label(const OfflineDataset& data, const SketchLabel& label) {
  for (std::size_t e = 0; e < data.episodes.size(); ++e) {
    if (data.episodes[e].episode_id == label.episode_id) return data.flat_index(e, label.t);
  }
  throw Error(ErrorCode::kNotFound, "no episode " + std::to_string(label.episode_id));
}

StratifiedSampler::StratifiedSampler(std::span<const double> rewards, std::size_t k,
                                     std::uint64_t seed)
    : k_(k), members_(k), rng_(seed) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "need at least one stratum");
  if (rewards.empty()) throw Error(ErrorCode::kInvalidArgument, "no labels to stratify");
  for (std::size_t i = 0; i < rewards.size(); ++i) members_[stratum_of(rewards[i])].push_back(i);
  for (std::size_t s = 0; s < k_; ++s) {
    if (!members_[s].empty()) nonempty_.push_back(s);
  }
}

std::size_t StratifiedSampler::stratum_of(double reward) const {
  const double pos = (std::clamp(reward, -1.0, 1.0) + 1.0) / 2.0 * static_cast<double>(k_);
  return std::min(static_cast<std::size_t>(pos), k_ - 1);
}

std::vector<std::size_t> StratifiedSampler::batch(std::size_t batch_size) {
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  const std::size_t n = nonempty_.size();
  // Equal share per stratum; the remainder goes to randomly chosen strata.
  std::vector<std::size_t> counts(n, batch_size / n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);
  for (std::size_t r = 0; r < batch_size % n; ++r) ++counts[order[r]];
  for (std::size_t j = 0; j < n; ++j) {
    const auto& pool = members_[nonempty_[j]];
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t c = 0; c < counts[j]; ++c) out.push_back(pool[pick(rng_)]);
  }
  return out;
}

void reward_input(const Normalizer& norm, double max_basal, const StateVector& state, double basal,
                  double* column) {
  const StateVector z = norm.normalize(state);
  std::copy(z.begin(), z.end(), column);
  column[kStateDim] = 2.0 * basal / max_basal - 1.0;
}

double RewardModel::predict(const StateVector& state, double basal) const {
  nn::Matrix x(kInputDim, 1);
  reward_input(normalizer, max_basal, state, basal, x.data());
  return net.forward(x)(0, 0);
}

std::vector<double> RewardModel::predict(std::span<const StateVector> states,
                                         std::span<const double> basal) const {
  if (states.size() != basal.size()) throw Error(ErrorCode::kDimensionMismatch, "state/action count");
  std::vector<double> out(states.size());
  constexpr std::size_t kChunk = 4096;
  for (std::size_t begin = 0; begin < states.size(); begin += kChunk) {
    const std::size_t n = std::min(kChunk, states.size() - begin);
    nn::Matrix x(kInputDim, static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      reward_input(normalizer, max_basal, states[begin + i], basal[begin + i],
                   x.col(static_cast<Eigen::Index>(i)).data());
    }
    const nn::Matrix y = net.forward(x);
    for (std::size_t i = 0; i < n; ++i) out[begin + i] = y(0, static_cast<Eigen::Index>(i));
  }
  return out;
}

namespace {

constexpr std::size_t kSplitBlock = 240;  // 12 h of samples

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

// Holds out whole blocks of contiguous samples, never single samples.
Split split_labels(const std::vector<SketchLabel>& labels, double fraction, std::uint64_t seed) {
  std::map<std::pair<std::int64_t, std::size_t>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    groups[{labels[i].episode_id, labels[i].t / kSplitBlock}].push_back(i);
  }
  std::vector<const std::vector<std::size_t>*> order;
  for (const auto& [key, members] : groups) order.push_back(&members);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto wanted = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(labels.size())));
  Split split;
  if (wanted == 0) {
    for (std::size_t i = 0; i < labels.size(); ++i) split.train.push_back(i);
    return split;
  }
  if (order.size() < 2) {
    // One block only: hold out its tail.
    const std::size_t cut = labels.size() - wanted;
    for (std::size_t i = 0; i < labels.size(); ++i) (i < cut ? split.train : split.validation).push_back(i);
    return split;
  }
  for (std::size_t g = 0; g < order.size(); ++g) {
    const bool hold = split.validation.size() < wanted && g + 1 < order.size();
    auto& dst = hold ? split.validation : split.train;
    dst.insert(dst.end(), order[g]->begin(), order[g]->end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  return split;
}

nn::Mlp make_reward_net(const RewardConfig& config) {
  std::vector<std::size_t> dims{RewardModel::kInputDim};
  std::vector<nn::Activation> acts;
  for (std::size_t h : config.hidden) {
    dims.push_back(h);
    acts.push_back(nn::Activation::kRelu);
  }
  dims.push_back(1);
  acts.push_back(nn::Activation::kIdentity);
  return nn::Mlp(dims, acts, config.seed);
}

}  // namespace

RewardModel train_reward_model(const OfflineDataset& data, const Normalizer& normalizer,
                               double max_basal, const LabelSet& labels, const RewardConfig& config) {
  if (labels.size() < config.min_labels) {
    throw Error(ErrorCode::kInsufficientLabels,
                "insufficient labels: " + std::to_string(labels.size()) + " < " +
                    std::to_string(config.min_labels));
  }
  if (!(max_basal > 0.0)) throw Error(ErrorCode::kInvalidArgument, "max_basal must be positive");
  if (config.batch_size == 0 || config.max_epochs == 0) {
    throw Error(ErrorCode::kInvalidArgument, "batch size and epochs must be positive");
  }
  const auto all = labels.labels();
  const std::size_t n = all.size();
  nn::Matrix x(RewardModel::kInputDim, static_cast<Eigen::Index>(n));
  nn::Matrix y(1, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t flat = resolve_label(data, all[i]);
    reward_input(normalizer, max_basal, data.states[flat], data.actions[flat],
                 x.col(static_cast<Eigen::Index>(i)).data());
    y(0, static_cast<Eigen::Index>(i)) = all[i].reward;
  }

  const Split split = split_labels(all, config.validation_fraction, config.seed ^ 0x5bd1e995ULL);
  auto gather = [&](const std::vector<std::size_t>& idx, nn::Matrix& xs, nn::Matrix& ys) {
    xs.resize(x.rows(), static_cast<Eigen::Index>(idx.size()));
    ys.resize(1, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      xs.col(static_cast<Eigen::Index>(j)) = x.col(static_cast<Eigen::Index>(idx[j]));
      ys(0, static_cast<Eigen::Index>(j)) = y(0, static_cast<Eigen::Index>(idx[j]));
    }
  };
  nn::Matrix x_train, y_train, x_val, y_val;
  gather(split.train, x_train, y_train);
  gather(split.validation, x_val, y_val);

  std::vector<double> train_rewards(split.train.size());
  for (std::size_t j = 0; j < split.train.size(); ++j) train_rewards[j] = y_train(0, static_cast<Eigen::Index>(j));
  StratifiedSampler sampler(train_rewards, config.strata, config.seed + 1);

  RewardModel model;
  model.normalizer = normalizer;
  model.max_basal = max_basal;
  model.net = make_reward_net(config);
  auto adam = nn::AdamState::for_network(model.net, config.lr);

  const bool has_validation = !split.validation.empty();
  auto validation_loss = [&](const nn::Mlp& net) {
    return has_validation ? nn::mse_loss(net.forward(x_val), y_val) : nn::mse_loss(net.forward(x_train), y_train);
  };

  const std::size_t batches_per_epoch =
      std::max<std::size_t>(1, (split.train.size() + config.batch_size - 1) / config.batch_size);
  nn::Mlp best = model.net;
  double best_loss = validation_loss(model.net);
  std::size_t best_epoch = 0;
  std::size_t since_best = 0;
  nn::Matrix xb(x.rows(), static_cast<Eigen::Index>(config.batch_size));
  nn::Matrix yb(1, static_cast<Eigen::Index>(config.batch_size));
  nn::ForwardCache cache;
  std::size_t epoch = 0;
  for (epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const auto idx = sampler.batch(config.batch_size);
      for (std::size_t j = 0; j < idx.size(); ++j) {
        xb.col(static_cast<Eigen::Index>(j)) = x_train.col(static_cast<Eigen::Index>(idx[j]));
        yb(0, static_cast<Eigen::Index>(j)) = y_train(0, static_cast<Eigen::Index>(idx[j]));
      }
      nn::Matrix grad;
      nn::mse_loss(model.net.forward(xb, cache), yb, &grad);
      nn::adam_step(model.net, model.net.backward(cache, grad), adam);
    }
    const double loss = validation_loss(model.net);
    if (loss < best_loss) {
      best_loss = loss;
      best = model.net;
      best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  model.net = std::move(best);
  model.validation_loss = best_loss;
  model.best_epoch = best_epoch;
  model.epochs_run = std::min(epoch, config.max_epochs);
  return model;
}

std::vector<double> relabel(const OfflineDataset& data, const RewardModel& model) {
  auto out = model.predict(data.states, data.actions);
  for (double& r : out) r = std::clamp(r, -1.0, 1.0);
  return out;
}

void save_reward_model(const std::string& path, const RewardModel& model) {
  nn::Checkpoint ckpt;
  ckpt.net = model.net;
  ckpt.normalizer = model.normalizer;
  ckpt.metadata["max_basal"] = model.max_basal;
  ckpt.metadata["validation_loss"] = model.validation_loss;
  ckpt.metadata["best_epoch"] = static_cast<double>(model.best_epoch);
  ckpt.metadata["epochs_run"] = static_cast<double>(model.epochs_run);
  nn::save_checkpoint(path, ckpt);
}

RewardModel load_reward_model(const std::string& path) {
  auto ckpt = nn::load_checkpoint(path);
  if (ckpt.net.input_dim() != RewardModel::kInputDim || ckpt.net.output_dim() != 1) {
    throw Error(ErrorCode::kDimensionMismatch, "not a reward network: " + path);
  }
  if (!ckpt.normalizer || !ckpt.metadata.contains("max_basal")) {
    throw Error(ErrorCode::kIo, "reward checkpoint lacks normalizer or action scale: " + path);
  }
  RewardModel m;
  m.net = std::move(ckpt.net);
  m.normalizer = *ckpt.normalizer;
  m.max_basal = ckpt.metadata.at("max_basal");
  m.validation_loss = ckpt.metadata.count("validation_loss") ? ckpt.metadata.at("validation_loss") : 0.0;
  m.best_epoch = static_cast<std::size_t>(ckpt.metadata.count("best_epoch") ? ckpt.metadata.at("best_epoch") : 0.0);
  m.epochs_run = static_cast<std::size_t>(ckpt.metadata.count("epochs_run") ? ckpt.metadata.at("epochs_run") : 0.0);
  return m;
}

}  // namespace paint
