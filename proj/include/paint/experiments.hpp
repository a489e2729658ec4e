#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "paint/datastore.hpp"
#include "paint/pipeline.hpp"
#include "paint/preferences.hpp"
#include "paint/reward_model.hpp"
#include "paint/safe_orl.hpp"

namespace paint {

/// Sizes shared by every experiment.
struct Scale {
  std::size_t samples = 20000;
  std::size_t labels = 2000;
  std::vector<std::string> patients{"adult", "adolescent", "child"};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int eval_days = 10;
  std::size_t eval_repeats = 5;
  double lambda = 2.5;
  Td3bcConfig td3;
  RewardConfig reward;

  /// Laptop-sized networks and data.
  static Scale desk();
  /// 100k samples, 10k labels, full-width networks.
  static Scale paper();
};

/// Dataset and priori of one (patient, seed) pair.
struct PatientRun {
  std::string patient;
  std::uint64_t seed = 0;
  PatientProfile profile;
  OfflineDataset data;
  Normalizer normalizer;
  Policy priori;
};

using LogFn = std::function<void(const std::string&)>;

/// Generates the dataset and trains (or loads from `cache_dir`) the priori.
PatientRun prepare_run(const std::string& patient, std::uint64_t seed, const Scale& scale,
                       const std::string& cache_dir = {}, const LogFn& log = {});

/// How simulated sketch labels are produced.
struct LabelPlan {
  PreferenceFn preference;
  std::size_t count = 2000;
  /// Share of labeled samples whose label is negated.
  double corrupt_fraction = 0.0;
  /// Gaussian noise std as a multiple of the labels' std; labels are then clamped.
  double noise_sigmas = 0.0;
};

/// Normalized, possibly corrupted labels for `plan`.
LabelSet simulate_labels(const OfflineDataset& data, const LabelPlan& plan, std::uint64_t seed);

/// Labels corrupted in place: a seeded `fraction` of entries negated.
void corrupt_labels(std::vector<double>& labels, double fraction, std::uint64_t seed);
/// Adds N(0, (sigmas * std(labels))^2) and clamps to [-1, 1].
void add_label_noise(std::vector<double>& labels, double sigmas, std::uint64_t seed);

struct TunedRun {
  RewardModel reward;
  Policy tuned;
};

/// Reward model on `labels`, relabel, then tune the run's priori.
TunedRun tune_run(const PatientRun& run, const LabelSet& labels, double lambda, const Scale& scale);

EvalConfig eval_config_for(const PatientRun& run, const Scale& scale);

struct Paired {
  ReportSummary priori;
  ReportSummary tuned;
};

/// Priori and tuned policy under identical evaluation seeds.
Paired evaluate_pair(const PatientRun& run, const Policy& tuned, const Scale& scale);
ReportSummary evaluate_policy(const PatientRun& run, const Policy& policy, const Scale& scale);
/// Noise-free PID at a setpoint (default: the profile's).
ReportSummary evaluate_pid(const PatientRun& run, const Scale& scale,
                           std::optional<double> setpoint = std::nullopt);

nlohmann::ordered_json summary_json(const ReportSummary& s);

/// Rows of one experiment; `runs` holds per (patient, seed) records and
/// `rows` the aggregated table.
struct ResultTable {
  std::string experiment;
  std::vector<nlohmann::ordered_json> runs;
  std::vector<nlohmann::ordered_json> rows;

  std::string to_jsonl() const;
  std::string to_text() const;
};

struct ExperimentOptions {
  Scale scale = Scale::desk();
  std::string cache_dir;
  LogFn log;
  /// Overrides Scale::lambda when set.
  std::optional<double> lambda;
};

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"bg-targets",        "common-goals",   "mealtimes",
                                              "compression",       "sample-efficiency",
                                              "corrupt-labels",    "label-noise",    "diverse-strategies"};
  return names;
}

/// Runs a named experiment. Throws kInvalidArgument for unknown names.
ResultTable run_experiment(const std::string& name, const ExperimentOptions& options);

/// The three common goals and their preference functions.
struct Goal {
  std::string name;
  std::string preference;
  std::string metric;  // "tir", "tbr" or "cov"
  bool increase;
};
const std::vector<Goal>& common_goals();
double metric_of(const ReportSummary& s, const std::string& metric);

}  // namespace paint
