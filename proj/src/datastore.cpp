#include "paint/datastore.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "binary_io.hpp"
#include "paint/error.hpp"
#include "paint/metrics.hpp"

namespace paint {

namespace {

constexpr char kTrajMagic[8] = {'P', 'A', 'I', 'N', 'T', 'T', 'R', 'J'};
constexpr char kDatasetMagic[8] = {'P', 'A', 'I', 'N', 'T', 'D', 'S', 'T'};
constexpr std::uint64_t kMaxSamples = 1ull << 26;

void put_column(std::ostream& out, const std::vector<double>& column) {
  for (double v : column) detail::put_f64(out, v);
}

std::vector<double> get_column(std::istream& in, std::uint64_t n) {
  std::vector<double> column(n);
  for (auto& v : column) v = detail::get_f64(in);
  return column;
}

}  // namespace

void write_trajectory(std::ostream& out, const Trajectory& traj) {
  traj.validate();
  out.write(kTrajMagic, sizeof kTrajMagic);
  detail::put_u32(out, kTrajectoryFormatVersion);
  detail::put_string(out, traj.patient_id);
  detail::put_u64(out, static_cast<std::uint64_t>(traj.episode_id));
  detail::put_u64(out, traj.seed);
  detail::put_f64(out, traj.start_clock);
  detail::put_u32(out, traj.terminated ? 1u : 0u);
  detail::put_u64(out, traj.size());
  detail::put_u64(out, traj.fault_onsets.size());
  for (std::size_t onset : traj.fault_onsets) detail::put_u64(out, onset);
  put_column(out, traj.t);
  put_column(out, traj.glucose);
  put_column(out, traj.true_glucose);
  put_column(out, traj.basal);
  put_column(out, traj.bolus);
  put_column(out, traj.carbs);
  if (!out) throw Error(ErrorCode::kIo, "failed to write trajectory");
}

Trajectory read_trajectory(std::istream& in) {
  char magic[8];
  detail::read_exact(in, magic, sizeof magic);
  if (!std::equal(magic, magic + 8, kTrajMagic)) throw Error(ErrorCode::kIo, "not a trajectory record");
  const std::uint32_t version = detail::get_u32(in);
  if (version != kTrajectoryFormatVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                "unsupported trajectory version " + std::to_string(version));
  }
  Trajectory traj;
  traj.patient_id = detail::get_string(in, 256);
  traj.episode_id = static_cast<std::int64_t>(detail::get_u64(in));
  traj.seed = detail::get_u64(in);
  traj.start_clock = detail::get_f64(in);
  traj.terminated = detail::get_u32(in) != 0;
  const std::uint64_t n = detail::get_u64(in);
  const std::uint64_t n_onsets = detail::get_u64(in);
  if (n > kMaxSamples || n_onsets > n) throw Error(ErrorCode::kTruncated, "corrupt length field");
  traj.fault_onsets.resize(n_onsets);
  for (auto& onset : traj.fault_onsets) onset = detail::get_u64(in);
  traj.t = get_column(in, n);
  traj.glucose = get_column(in, n);
  traj.true_glucose = get_column(in, n);
  traj.basal = get_column(in, n);
  traj.bolus = get_column(in, n);
  traj.carbs = get_column(in, n);
  traj.validate();
  return traj;
}

void write_dataset_file(const std::string& path, std::span<const Trajectory> episodes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out.write(kDatasetMagic, sizeof kDatasetMagic);
  detail::put_u32(out, kTrajectoryFormatVersion);
  detail::put_u64(out, episodes.size());
  for (const auto& traj : episodes) write_trajectory(out, traj);
}

std::vector<Trajectory> read_dataset_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open " + path);
  char magic[8];
  detail::read_exact(in, magic, sizeof magic);
  if (!std::equal(magic, magic + 8, kDatasetMagic)) throw Error(ErrorCode::kIo, "not a dataset file");
  const std::uint32_t version = detail::get_u32(in);
  if (version != kTrajectoryFormatVersion) {
    throw Error(ErrorCode::kVersionMismatch, "unsupported dataset version " + std::to_string(version));
  }
  const std::uint64_t count = detail::get_u64(in);
  if (count > 100000) throw Error(ErrorCode::kTruncated, "corrupt episode count");
  std::vector<Trajectory> episodes;
  episodes.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) episodes.push_back(read_trajectory(in));
  return episodes;
}

void write_csv(std::ostream& out, const Trajectory& traj) {
  out << "t,glucose_mgdl,basal_u_min,bolus_u,carbs_g\n";
  char line[160];
  for (std::size_t i = 0; i < traj.size(); ++i) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%.17g\n", traj.t[i], traj.glucose[i],
                  traj.basal[i], traj.bolus[i], traj.carbs[i]);
    out << line;
  }
}

std::string dataset_hash(std::span<const Trajectory> episodes) {
  std::ostringstream buf(std::ios::binary);
  for (const auto& traj : episodes) write_trajectory(buf, traj);
  const std::string bytes = buf.str();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << h;
  return hex.str();
}

OfflineDataset OfflineDataset::build(const PatientParams& params, std::vector<Trajectory> episodes) {
  OfflineDataset data;
  data.params = params;
  data.episodes = std::move(episodes);
  std::size_t total = 0;
  for (const auto& e : data.episodes) total += e.size();
  data.states.reserve(total);
  data.actions.reserve(total);
  for (const auto& e : data.episodes) {
    data.offsets.push_back(data.actions.size());
    auto states = build_states(e, params);
    data.states.insert(data.states.end(), states.begin(), states.end());
    data.actions.insert(data.actions.end(), e.basal.begin(), e.basal.end());
  }
  return data;
}

std::size_t OfflineDataset::flat_index(std::size_t episode, std::size_t t) const {
  if (episode >= episodes.size() || t >= episodes[episode].size()) {
    throw Error(ErrorCode::kNotFound, "sample (" + std::to_string(episode) + ", " +
                                          std::to_string(t) + ") does not exist");
  }
  return offsets[episode] + t;
}

std::size_t OfflineDataset::episode_of(std::size_t flat) const {
  if (flat >= size()) throw Error(ErrorCode::kNotFound, "flat index out of range");
  const auto it = std::upper_bound(offsets.begin(), offsets.end(), flat);
  return static_cast<std::size_t>(std::distance(offsets.begin(), it)) - 1;
}

std::vector<double> safety_rewards(const OfflineDataset& data) {
  std::vector<double> rewards(data.size(), 0.0);
  for (std::size_t e = 0; e < data.episodes.size(); ++e) {
    const auto& traj = data.episodes[e];
    const std::size_t base = data.offsets[e];
    for (std::size_t t = 0; t + 1 < traj.size(); ++t) {
      rewards[base + t] = -magni_risk(traj.glucose[t + 1]);
    }
    if (traj.terminated && !traj.empty()) rewards[base + traj.size() - 1] = kTerminationPenalty;
  }
  return rewards;
}

std::vector<TransitionView> assemble(const OfflineDataset& data, std::span<const double> rewards,
                                     std::size_t n_steps, double gamma) {
  if (rewards.size() != data.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "reward column does not match dataset");
  }
  if (n_steps == 0) throw Error(ErrorCode::kInvalidArgument, "n-step horizon must be >= 1");
  std::vector<TransitionView> views;
  views.reserve(data.size());
  for (std::size_t e = 0; e < data.episodes.size(); ++e) {
    const auto& traj = data.episodes[e];
    const std::size_t len = traj.size();
    const std::size_t base = data.offsets[e];
    // Terminated episodes: every sample is a transition, the last one terminal.
    // Truncated episodes: the last sample only serves as a bootstrap state.
    const std::size_t n_transitions = traj.terminated ? len : (len > 0 ? len - 1 : 0);
    for (std::size_t t = 0; t < n_transitions; ++t) {
      TransitionView v;
      v.episode = e;
      v.t = t;
      v.state = base + t;
      v.action = data.actions[base + t];
      v.reward_begin = base + t;
      v.reward_count = std::min(n_steps, n_transitions - t);
      double discount = 1.0;
      for (std::size_t k = 0; k < v.reward_count; ++k) {
        v.discounted_return += discount * rewards[base + t + k];
        discount *= gamma;
      }
      v.bootstrap_discount = discount;
      const std::size_t end = t + v.reward_count;
      if (traj.terminated && end == len) {
        v.done = true;
      } else {
        v.next_state = base + end;
        v.done = end == len - 1;
      }
      views.push_back(v);
    }
  }
  return views;
}

UniformSampler::UniformSampler(std::size_t population, std::uint64_t seed)
    : rng_(seed), dist_(0, population == 0 ? 0 : population - 1) {
  if (population == 0) throw Error(ErrorCode::kInvalidArgument, "cannot sample an empty population");
}

std::size_t UniformSampler::next() { return dist_(rng_); }

std::vector<std::size_t> UniformSampler::batch(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = next();
  return out;
}

}  // namespace paint
