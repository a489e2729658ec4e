#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "paint/error.hpp"
#include "paint/experiments.hpp"
#include "paint/service.hpp"
#include "paint/workflow.hpp"

namespace fs = std::filesystem;
using namespace paint;

namespace {

std::string data_dir() {
  if (const char* env = std::getenv("PAINT_DATA_DIR"); env && *env) return env;
  return "paint-data";
}

std::string in_data_dir(const std::string& rel) { return (fs::path(data_dir()) / rel).string(); }

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return 2;
    case ErrorCode::kNotFound: return 3;
    case ErrorCode::kIo:
    case ErrorCode::kVersionMismatch:
    case ErrorCode::kTruncated: return 4;
    case ErrorCode::kInsufficientLabels:
    case ErrorCode::kDuplicateLabel: return 5;
    default: return 1;
  }
}

void print_error(const std::string& code, const std::string& message) {
  std::cerr << nlohmann::json{{"error", code}, {"message", message}}.dump() << '\n';
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out << text;
}

struct ScaleFlags {
  bool paper = false;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> hidden;
  std::optional<std::size_t> warmup;

  Scale scale() const {
    Scale s = paper ? Scale::paper() : Scale::desk();
    if (hidden) s.td3.hidden = *hidden;
    if (epochs) s.td3.epochs_pretrain = s.td3.epochs_tune = *epochs;
    if (warmup) s.td3.epochs_critic_warmup = *warmup;
    return s;
  }

  void add(CLI::App* cmd) {
    cmd->add_flag("--paper-scale", paper, "Full-size data, labels and networks");
    cmd->add_option("--epochs", epochs, "Override training epochs");
    cmd->add_option("--hidden", hidden, "Override actor/critic width");
    cmd->add_option("--warmup", warmup, "Override critic warm-up epochs before tuning");
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"paintctl: preference-tuned offline RL insulin dosing"};
  app.require_subcommand(1);

  // gen-data
  std::string patient = "adult";
  int days = 10;
  std::uint64_t seed = 1;
  std::optional<std::size_t> samples;
  std::optional<double> pid_target;
  std::string dataset_path;
  std::string csv_dir;
  ScaleFlags gen_scale;
  auto* gen = app.add_subcommand("gen-data", "Generate PID + bolus demonstrator data");
  gen->add_option("--patient", patient, "adult, adolescent or child")->capture_default_str();
  gen->add_option("--days", days, "Days per episode")->capture_default_str();
  gen->add_option("--samples", samples, "Total samples (default by scale)");
  gen->add_option("--seed", seed)->capture_default_str();
  gen->add_option("--pid-target", pid_target, "Demonstrator setpoint, mg/dL");
  gen->add_option("--out", dataset_path, "Dataset file");
  gen->add_option("--csv-dir", csv_dir, "Also write one CSV per episode here");
  gen->add_flag("--paper-scale", gen_scale.paper);

  // train-priori
  std::string bundle_dir;
  ScaleFlags priori_scale;
  auto* tp = app.add_subcommand("train-priori", "Phase 1: safety priori policy");
  tp->add_option("--dataset", dataset_path, "Dataset file")->required();
  tp->add_option("--bundle", bundle_dir, "Bundle directory");
  tp->add_option("--seed", seed)->capture_default_str();
  priori_scale.add(tp);

  // auto-label
  std::string preference;
  std::size_t label_count = 2000;
  double corrupt = 0.0, noise = 0.0;
  std::string labels_path;
  auto* al = app.add_subcommand("auto-label", "Simulated sketch labels from a preference function");
  al->add_option("--dataset", dataset_path)->required();
  al->add_option("--preference", preference, "tir1..cov3, mealtime, compression, target-<mg/dL>")->required();
  al->add_option("--samples", label_count)->capture_default_str();
  al->add_option("--seed", seed)->capture_default_str();
  al->add_option("--corrupt", corrupt, "Fraction of labels negated")->capture_default_str();
  al->add_option("--noise", noise, "Gaussian noise in label standard deviations")->capture_default_str();
  al->add_option("--out", labels_path, "Label file (jsonl)");

  // train-reward
  ScaleFlags reward_scale;
  auto* tr = app.add_subcommand("train-reward", "Fit the reward model on sketch labels");
  tr->add_option("--bundle", bundle_dir)->required();
  tr->add_option("--dataset", dataset_path)->required();
  tr->add_option("--labels", labels_path)->required();
  tr->add_option("--seed", seed)->capture_default_str();
  reward_scale.add(tr);

  // tune
  double lambda = 2.5;
  ScaleFlags tune_scale;
  auto* tu = app.add_subcommand("tune", "Phase 2: preference tuning anchored to the priori");
  tu->add_option("--bundle", bundle_dir)->required();
  tu->add_option("--dataset", dataset_path)->required();
  tu->add_option("--lambda", lambda, "Preference strength")->capture_default_str();
  tu->add_option("--seed", seed)->capture_default_str();
  tune_scale.add(tu);

  // eval
  int eval_days = 10;
  std::size_t repeats = 5;
  std::string out_path;
  auto* ev = app.add_subcommand("eval", "Paired evaluation of a bundle");
  ev->add_option("--bundle", bundle_dir)->required();
  ev->add_option("--days", eval_days)->capture_default_str();
  ev->add_option("--repeats", repeats)->capture_default_str();
  ev->add_option("--seed", seed)->capture_default_str();
  ev->add_option("--out", out_path, "Report file (JSON); stdout by default");

  // experiment
  std::string experiment;
  std::vector<std::string> patients;
  std::vector<std::uint64_t> seeds;
  std::optional<double> exp_lambda;
  std::string cache_dir;
  std::string table_path;
  ScaleFlags exp_scale;
  auto* ex = app.add_subcommand("experiment", "Run one experiment protocol");
  ex->add_option("name", experiment)->required()->check(CLI::IsMember(experiment_names()));
  ex->add_option("--patients", patients);
  ex->add_option("--seeds", seeds);
  ex->add_option("--lambda", exp_lambda);
  ex->add_option("--cache", cache_dir, "Priori cache directory");
  ex->add_option("--out", out_path, "Line-delimited results");
  ex->add_option("--table", table_path, "Human-readable table; stdout by default");
  exp_scale.add(ex);

  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
  int serve_repeats = 5;
  ScaleFlags serve_scale;
  auto* sv = app.add_subcommand("serve", "HTTP service for the sketching UI");
  sv->add_option("--bundle", bundle_dir)->required();
  sv->add_option("--dataset", dataset_path)->required();
  sv->add_option("--host", host)->capture_default_str();
  sv->add_option("--port", port)->capture_default_str();
  sv->add_option("--repeats", serve_repeats, "Evaluation repeats for reports")->capture_default_str();
  sv->add_option("--seed", seed)->capture_default_str();
  serve_scale.add(sv);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      GenerationConfig gc;
      gc.samples = samples.value_or(gen_scale.scale().samples);
      gc.episode_days = days;
      gc.seed = seed;
      gc.pid_target_mgdl = pid_target;
      const auto profile = load_patient(patient);
      const auto episodes = generate_dataset(profile, patient, gc);
      if (dataset_path.empty()) dataset_path = in_data_dir("datasets/" + patient + "-s" + std::to_string(seed) + ".paintds");
      if (fs::path(dataset_path).has_parent_path()) fs::create_directories(fs::path(dataset_path).parent_path());
      write_dataset_file(dataset_path, episodes);
      if (!csv_dir.empty()) {
        fs::create_directories(csv_dir);
        for (const auto& e : episodes) {
          std::ofstream out(fs::path(csv_dir) / ("episode-" + std::to_string(e.episode_id) + ".csv"));
          write_csv(out, e);
        }
      }
      std::size_t n = 0;
      for (const auto& e : episodes) n += e.size();
      std::cout << nlohmann::json{{"dataset", dataset_path}, {"patient", patient}, {"episodes", episodes.size()},
                                  {"samples", n}, {"hash", dataset_hash(episodes)}}
                       .dump()
                << '\n';
    } else if (*tp) {
      const auto ds = load_dataset(dataset_path);
      Td3bcConfig cfg = priori_scale.scale().td3;
      cfg.seed = seed;
      auto bundle = train_priori_bundle(ds, cfg);
      if (bundle_dir.empty()) bundle_dir = in_data_dir("bundles/" + ds.patient + "-s" + std::to_string(seed));
      bundle.save(bundle_dir);
      std::cout << nlohmann::json{{"bundle", bundle_dir}, {"patient", ds.patient}, {"dataset_hash", bundle.dataset_hash}}.dump()
                << '\n';
    } else if (*al) {
      const auto ds = load_dataset(dataset_path);
      LabelPlan plan{PreferenceFn::from_name(preference), label_count, corrupt, noise};
      const auto labels = simulate_labels(ds.data, plan, seed);
      if (labels_path.empty()) labels_path = in_data_dir("labels/" + ds.patient + "-" + preference + ".jsonl");
      if (fs::path(labels_path).has_parent_path()) fs::create_directories(fs::path(labels_path).parent_path());
      labels.save(labels_path);
      std::cout << nlohmann::json{{"labels", labels_path}, {"count", labels.size()}, {"preference", preference}}.dump()
                << '\n';
    } else if (*tr) {
      const auto ds = load_dataset(dataset_path);
      auto bundle = PolicyBundle::load(bundle_dir);
      RewardConfig rc = reward_scale.scale().reward;
      rc.seed = seed;
      train_reward_into(bundle, ds, LabelSet::load(labels_path), rc);
      bundle.save(bundle_dir);
      std::cout << nlohmann::json{{"bundle", bundle_dir},
                                  {"validation_loss", bundle.reward->validation_loss},
                                  {"best_epoch", bundle.reward->best_epoch},
                                  {"epochs_run", bundle.reward->epochs_run}}
                       .dump()
                << '\n';
    } else if (*tu) {
      const auto ds = load_dataset(dataset_path);
      auto bundle = PolicyBundle::load(bundle_dir);
      Td3bcConfig cfg = tune_scale.scale().td3;
      cfg.seed = seed;
      tune_into(bundle, ds, lambda, cfg);
      bundle.save(bundle_dir);
      std::cout << nlohmann::json{{"bundle", bundle_dir}, {"lambda", lambda}}.dump() << '\n';
    } else if (*ev) {
      const auto bundle = PolicyBundle::load(bundle_dir);
      EvalConfig ec;
      ec.days = eval_days;
      ec.repeats = repeats;
      ec.seed = seed;
      write_text(out_path, report_json(report_bundle(bundle, ec), bundle).dump(2) + '\n');
    } else if (*ex) {
      ExperimentOptions opt;
      opt.scale = exp_scale.scale();
      if (!patients.empty()) opt.scale.patients = patients;
      if (!seeds.empty()) opt.scale.seeds = seeds;
      opt.lambda = exp_lambda;
      opt.cache_dir = cache_dir.empty() ? in_data_dir("cache") : cache_dir;
      opt.log = [](const std::string& m) { std::cerr << m << '\n'; };
      const auto table = run_experiment(experiment, opt);
      write_text(out_path.empty() ? in_data_dir("results/" + experiment + ".jsonl") : out_path, table.to_jsonl());
      write_text(table_path, table.to_text());
    } else if (*sv) {
      ServiceConfig sc;
      sc.bundle_dir = bundle_dir;
      sc.dataset_path = dataset_path;
      const Scale s = serve_scale.scale();
      sc.reward = s.reward;
      sc.reward.seed = seed;
      sc.td3 = s.td3;
      sc.td3.seed = seed;
      sc.eval.repeats = static_cast<std::size_t>(serve_repeats);
      sc.eval.seed = seed;
      Service service(sc);
      std::cerr << "serving " << service.bundle_name() << " on " << host << ':' << port << '\n';
      if (!service.listen(host, port)) throw Error(ErrorCode::kIo, "cannot listen on port " + std::to_string(port));
    }
  } catch (const Error& e) {
    print_error(std::string(to_string(e.code())), e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 0;
}
