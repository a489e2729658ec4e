#include "paint/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>

#include "paint/error.hpp"

namespace paint {

Scale Scale::desk() {
  Scale s;
  s.td3.hidden = 64;
  s.reward.hidden = {64, 64, 64};
  return s;
}

Scale Scale::paper() {
  Scale s;
  s.samples = 100000;
  s.labels = 10000;
  return s;
}

namespace {

void note(const LogFn& log, const std::string& msg) {
  if (log) log(msg);
}

std::string priori_cache_name(const PatientRun& run, const Scale& scale) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "priori_%s_s%llu_%s_h%zux%zu_e%zu_spe%zu.ckpt", run.patient.c_str(),
                static_cast<unsigned long long>(run.seed), run.data.hash().c_str(), scale.td3.hidden,
                scale.td3.hidden_layers, scale.td3.epochs_pretrain, scale.td3.steps_per_epoch);
  return buf;
}

double std_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

PatientRun prepare_run(const std::string& patient, std::uint64_t seed, const Scale& scale,
                       const std::string& cache_dir, const LogFn& log) {
  PatientRun run;
  run.patient = patient;
  run.seed = seed;
  run.profile = load_patient(patient);
  GenerationConfig gen;
  gen.samples = scale.samples;
  gen.seed = seed;
  run.data = OfflineDataset::build(run.profile.params, generate_dataset(run.profile, patient, gen));
  run.normalizer = Normalizer::fit(run.data.states);

  std::filesystem::path cached;
  if (!cache_dir.empty()) {
    std::filesystem::create_directories(cache_dir);
    cached = std::filesystem::path(cache_dir) / priori_cache_name(run, scale);
    if (std::filesystem::exists(cached)) {
      run.priori = load_policy(cached.string());
      note(log, "priori " + patient + " seed " + std::to_string(seed) + ": cached");
      return run;
    }
  }
  Td3bcConfig cfg = scale.td3;
  cfg.seed = seed;
  note(log, "priori " + patient + " seed " + std::to_string(seed) + ": training");
  run.priori = train_priori(run.data, run.normalizer, max_basal_for(run.profile), cfg);
  if (!cached.empty()) save_policy(cached.string(), run.priori);
  return run;
}

void corrupt_labels(std::vector<double>& labels, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "corruption fraction must be in [0, 1]");
  }
  std::vector<std::size_t> order(labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(labels.size())));
  for (std::size_t i = 0; i < n; ++i) labels[order[i]] = -labels[order[i]];
}

void add_label_noise(std::vector<double>& labels, double sigmas, std::uint64_t seed) {
  if (!(sigmas >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "noise level must be >= 0");
  const double sd = sigmas * std_of(labels);
  if (sd == 0.0) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sd);
  for (double& l : labels) l = std::clamp(l + noise(rng), -1.0, 1.0);
}

LabelSet simulate_labels(const OfflineDataset& data, const LabelPlan& plan, std::uint64_t seed) {
  const auto samples = select_label_samples(data, plan.count, derive_seed(seed, 201));
  auto values = normalize_labels(raw_preferences(plan.preference, data, samples));
  if (plan.corrupt_fraction > 0.0) corrupt_labels(values, plan.corrupt_fraction, derive_seed(seed, 202));
  if (plan.noise_sigmas > 0.0) add_label_noise(values, plan.noise_sigmas, derive_seed(seed, 203));
  LabelSet labels;
  labels.add_all(make_labels(data, samples, values));
  return labels;
}

TunedRun tune_run(const PatientRun& run, const LabelSet& labels, double lambda, const Scale& scale) {
  RewardConfig rc = scale.reward;
  rc.seed = derive_seed(run.seed, 300);
  auto reward = train_reward_model(run.data, run.normalizer, run.priori.max_basal, labels, rc);
  const auto rhat = relabel(run.data, reward);
  Td3bcConfig cfg = scale.td3;
  cfg.seed = run.seed;
  auto tuned = tune_policy(run.data, run.priori, rhat, lambda, cfg);
  return {std::move(reward), std::move(tuned)};
}

EvalConfig eval_config_for(const PatientRun& run, const Scale& scale) {
  EvalConfig ec;
  ec.days = scale.eval_days;
  ec.repeats = scale.eval_repeats;
  ec.seed = derive_seed(run.seed, 4242);
  return ec;
}

ReportSummary evaluate_policy(const PatientRun& run, const Policy& policy, const Scale& scale) {
  return summarize(evaluate(run.profile, run.patient, policy_factory(policy, run.profile.params),
                            eval_config_for(run, scale)));
}

Paired evaluate_pair(const PatientRun& run, const Policy& tuned, const Scale& scale) {
  return {evaluate_policy(run, run.priori, scale), evaluate_policy(run, tuned, scale)};
}

ReportSummary evaluate_pid(const PatientRun& run, const Scale& scale, std::optional<double> setpoint) {
  PidConfig pid = run.profile.pid;
  if (setpoint) pid.g_targ_mgdl = *setpoint;
  pid.validate();
  return summarize(evaluate(run.profile, run.patient, pid_factory(pid, false), eval_config_for(run, scale)));
}

nlohmann::ordered_json summary_json(const ReportSummary& s) {
  return {{"magni_reward", -s.magni_risk_total},
          {"mean_glucose", s.mean_glucose},
          {"tir", s.tir_pct},
          {"tbr", s.tbr_pct},
          {"cov", s.cov_pct},
          {"post_meal_tir", s.post_meal_tir_pct},
          {"post_event_cov", s.post_event_cov_pct},
          {"post_event_basal", s.post_event_basal},
          {"mean_basal", s.mean_basal},
          {"terminated", s.terminated}};
}

std::string ResultTable::to_jsonl() const {
  std::string out;
  for (const auto& r : runs) {
    nlohmann::ordered_json j{{"experiment", experiment}, {"kind", "run"}};
    j.update(r);
    out += j.dump() + '\n';
  }
  for (const auto& r : rows) {
    nlohmann::ordered_json j{{"experiment", experiment}, {"kind", "row"}};
    j.update(r);
    out += j.dump() + '\n';
  }
  return out;
}

std::string ResultTable::to_text() const {
  if (rows.empty()) return experiment + ": no rows\n";
  std::vector<std::string> cols;
  for (const auto& [k, v] : rows.front().items()) cols.push_back(k);
  auto cell = [](const nlohmann::ordered_json& v) {
    if (v.is_number_float()) {
      char buf[32];
      const double d = v.get<double>();
      std::snprintf(buf, sizeof buf, std::fabs(d) >= 1000 ? "%.0f" : "%.3g", d);
      return std::string(buf);
    }
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
  };
  std::vector<std::size_t> width(cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    width[c] = cols[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], cell(r.value(cols[c], nlohmann::ordered_json())).size());
  }
  std::ostringstream out;
  out << experiment << '\n';
  for (std::size_t c = 0; c < cols.size(); ++c) {
    out << (c ? "  " : "") << cols[c] << std::string(width[c] - cols[c].size(), ' ');
  }
  out << '\n';
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const std::string s = cell(r.value(cols[c], nlohmann::ordered_json()));
      out << (c ? "  " : "") << s << std::string(width[c] - s.size(), ' ');
    }
    out << '\n';
  }
  return out.str();
}

const std::vector<Goal>& common_goals() {
  static const std::vector<Goal> goals{{"Raise TIR", "tir2", "tir", true},
                                       {"Lower TBR", "tbr2", "tbr", false},
                                       {"Lower CoV", "cov1", "cov", false}};
  return goals;
}

double metric_of(const ReportSummary& s, const std::string& metric) {
  if (metric == "tir") return s.tir_pct;
  if (metric == "tbr") return s.tbr_pct;
  if (metric == "cov") return s.cov_pct;
  if (metric == "mean_glucose") return s.mean_glucose;
  if (metric == "mean_basal") return s.mean_basal;
  if (metric == "magni_reward") return -s.magni_risk_total;
  if (metric == "post_meal_tir") return s.post_meal_tir_pct;
  if (metric == "post_event_cov") return s.post_event_cov_pct;
  if (metric == "post_event_basal") return s.post_event_basal;
  throw Error(ErrorCode::kInvalidArgument, "unknown metric: " + metric);
}

namespace {

struct Context {
  const ExperimentOptions& opt;
  std::vector<PatientRun> runs;
  double lambda;

  explicit Context(const ExperimentOptions& o) : opt(o), lambda(o.lambda.value_or(o.scale.lambda)) {
    for (const auto& p : o.scale.patients) {
      for (auto s : o.scale.seeds) runs.push_back(prepare_run(p, s, o.scale, o.cache_dir, o.log));
    }
  }

  const Scale& scale() const { return opt.scale; }

  LabelPlan plan(const std::string& pref) const {
    return {PreferenceFn::from_name(pref), scale().labels, 0.0, 0.0};
  }

  nlohmann::ordered_json run_record(const PatientRun& run, const Paired& p) const {
    return {{"patient", run.patient}, {"seed", run.seed}, {"priori", summary_json(p.priori)},
            {"tuned", summary_json(p.tuned)}};
  }

  Paired tune_and_eval(const PatientRun& run, const LabelPlan& plan, double lam) const {
    note(opt.log, "tune " + run.patient + " seed " + std::to_string(run.seed) + " " + plan.preference.name());
    const auto labels = simulate_labels(run.data, plan, run.seed);
    const auto tuned = tune_run(run, labels, lam, scale());
    return evaluate_pair(run, tuned.tuned, scale());
  }
};

double med(std::vector<double> v) { return median(std::move(v)); }

// Median over runs of a paired metric before, after and the change.
struct PairedStat {
  double priori;
  double tuned;
  double change;
};

PairedStat paired_stat(const std::vector<Paired>& ps, const std::string& metric) {
  std::vector<double> a, b, d;
  for (const auto& p : ps) {
    a.push_back(metric_of(p.priori, metric));
    b.push_back(metric_of(p.tuned, metric));
    d.push_back(b.back() - a.back());
  }
  return {med(a), med(b), med(d)};
}

std::vector<Paired> tune_all(Context& ctx, ResultTable& table, const LabelPlan& plan, double lam,
                             const nlohmann::ordered_json& tag) {
  std::vector<Paired> out;
  for (const auto& run : ctx.runs) {
    out.push_back(ctx.tune_and_eval(run, plan, lam));
    auto rec = ctx.run_record(run, out.back());
    rec.update(tag);
    table.runs.push_back(std::move(rec));
  }
  return out;
}

ResultTable bg_targets(Context& ctx) {
  ResultTable t{"bg-targets", {}, {}};
  const std::vector<std::optional<double>> targets{100.0, 120.0, 140.0, std::nullopt, 160.0, 180.0, 200.0};
  for (const auto& target : targets) {
    std::vector<double> pid_reward, pid_mean, rl_reward, rl_mean;
    for (const auto& run : ctx.runs) {
      const auto pid = evaluate_pid(run, ctx.scale(), target);
      ReportSummary rl;
      if (target) {
        const auto plan = ctx.plan("target-" + std::to_string(static_cast<int>(*target)));
        rl = ctx.tune_and_eval(run, plan, ctx.lambda).tuned;
      } else {
        rl = evaluate_policy(run, run.priori, ctx.scale());
      }
      pid_reward.push_back(-pid.magni_risk_total);
      pid_mean.push_back(pid.mean_glucose);
      rl_reward.push_back(-rl.magni_risk_total);
      rl_mean.push_back(rl.mean_glucose);
      t.runs.push_back({{"patient", run.patient},
                        {"seed", run.seed},
                        {"target", target ? nlohmann::ordered_json(*target) : nlohmann::ordered_json("none")},
                        {"pid", summary_json(pid)},
                        {"rl", summary_json(rl)}});
    }
    const double pm = med(pid_mean), rm = med(rl_mean);
    t.rows.push_back({{"target", target ? nlohmann::ordered_json(*target) : nlohmann::ordered_json("none")},
                      {"pid_reward", med(pid_reward)},
                      {"rl_reward", med(rl_reward)},
                      {"pid_mean_glucose", pm},
                      {"rl_mean_glucose", rm},
                      {"target_achieved", std::fabs(rm - pm) <= 5.0}});
  }
  return t;
}

// Best PID setpoint for a goal, limited to a median reward of at least -35,000.
ReportSummary pid_benchmark(const PatientRun& run, const Scale& scale, const Goal& goal,
                            const ReportSummary& fallback) {
  std::optional<ReportSummary> best;
  for (int sp = 100; sp <= 200; sp += 5) {
    const auto s = evaluate_pid(run, scale, static_cast<double>(sp));
    if (s.magni_risk_total > 35000.0) continue;
    const double m = metric_of(s, goal.metric);
    if (!best || (goal.increase ? m > metric_of(*best, goal.metric) : m < metric_of(*best, goal.metric))) best = s;
  }
  return best.value_or(fallback);
}

ResultTable common_goals_table(Context& ctx, const std::string& name, const std::vector<LabelPlan>& variants,
                               const std::string& variant_key, const std::vector<double>& variant_values) {
  ResultTable t{name, {}, {}};
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (const auto& goal : common_goals()) {
      LabelPlan plan = variants[v];
      plan.preference = PreferenceFn::from_name(goal.preference);
      nlohmann::ordered_json tag{{"goal", goal.name}};
      if (!variant_key.empty()) tag[variant_key] = variant_values[v];
      const auto ps = tune_all(ctx, t, plan, ctx.lambda, tag);
      const auto st = paired_stat(ps, goal.metric);
      const auto risk = paired_stat(ps, "magni_reward");
      nlohmann::ordered_json row;
      if (!variant_key.empty()) row[variant_key] = variant_values[v];
      row["goal"] = goal.name;
      row["priori"] = st.priori;
      row["tuned"] = st.tuned;
      row["change"] = st.change;
      row["priori_reward"] = risk.priori;
      row["tuned_reward"] = risk.tuned;
      row["direction_held"] = goal.increase ? st.change > 0.0 : st.change < 0.0;
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

ResultTable common_goals_experiment(Context& ctx) {
  ResultTable t{"common-goals", {}, {}};
  for (const auto& goal : common_goals()) {
    std::vector<Paired> ps;
    std::vector<double> pid_change, pid_reward;
    for (const auto& run : ctx.runs) {
      ps.push_back(ctx.tune_and_eval(run, ctx.plan(goal.preference), ctx.lambda));
      const auto base = evaluate_pid(run, ctx.scale());
      const auto bench = pid_benchmark(run, ctx.scale(), goal, base);
      pid_change.push_back(metric_of(bench, goal.metric) - metric_of(base, goal.metric));
      pid_reward.push_back(-bench.magni_risk_total);
      auto rec = ctx.run_record(run, ps.back());
      rec["goal"] = goal.name;
      rec["pid_benchmark"] = summary_json(bench);
      rec["pid_default"] = summary_json(base);
      t.runs.push_back(std::move(rec));
    }
    const auto st = paired_stat(ps, goal.metric);
    const auto risk = paired_stat(ps, "magni_reward");
    const double pc = med(pid_change);
    t.rows.push_back({{"goal", goal.name},
                      {"pid_reward", med(pid_reward)},
                      {"rl_reward", risk.tuned},
                      {"pid_change", pc},
                      {"rl_change", st.change},
                      {"goal_achieved", goal.increase ? st.change > pc : st.change < pc}});
  }
  return t;
}

ResultTable case_study(Context& ctx, const std::string& name, const std::string& pref,
                       const std::vector<std::string>& metrics) {
  ResultTable t{name, {}, {}};
  const auto ps = tune_all(ctx, t, ctx.plan(pref), ctx.lambda, {{"preference", pref}});
  for (const auto& m : metrics) {
    const auto st = paired_stat(ps, m);
    t.rows.push_back({{"metric", m}, {"priori", st.priori}, {"tuned", st.tuned}, {"change", st.change}});
  }
  return t;
}

ResultTable diverse_strategies(Context& ctx) {
  ResultTable t{"diverse-strategies", {}, {}};
  for (const char* pref : {"tir1", "tir2", "tir3", "tbr1", "tbr2", "tbr3", "cov1", "cov2", "cov3"}) {
    const auto ps = tune_all(ctx, t, ctx.plan(pref), ctx.lambda, {{"preference", pref}});
    nlohmann::ordered_json row{{"preference", pref}};
    for (const char* m : {"tir", "tbr", "cov", "magni_reward"}) row[std::string(m) + "_change"] = paired_stat(ps, m).change;
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace

ResultTable run_experiment(const std::string& name, const ExperimentOptions& options) {
  if (std::find(experiment_names().begin(), experiment_names().end(), name) == experiment_names().end()) {
    throw Error(ErrorCode::kInvalidArgument, "unknown experiment: " + name);
  }
  Context ctx(options);
  if (name == "bg-targets") return bg_targets(ctx);
  if (name == "common-goals") return common_goals_experiment(ctx);
  if (name == "mealtimes") {
    return case_study(ctx, name, "mealtime", {"post_meal_tir", "magni_reward", "mean_basal"});
  }
  if (name == "compression") {
    return case_study(ctx, name, "compression", {"post_event_basal", "post_event_cov", "magni_reward"});
  }
  if (name == "diverse-strategies") return diverse_strategies(ctx);
  std::vector<LabelPlan> variants;
  std::vector<double> values;
  std::string key;
  if (name == "sample-efficiency") {
    key = "labels";
    for (std::size_t n : {250, 1000, 2000, 5000, 10000, 50000, 90000}) {
      if (n > options.scale.samples) continue;
      variants.push_back({{}, n, 0.0, 0.0});
      values.push_back(static_cast<double>(n));
    }
  } else if (name == "corrupt-labels") {
    key = "corrupt_fraction";
    for (double f : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
      variants.push_back({{}, options.scale.labels, f, 0.0});
      values.push_back(f);
    }
  } else {
    key = "noise_sigmas";
    for (double s : {0.0, 1.0, 3.0, 10.0}) {
      variants.push_back({{}, options.scale.labels, 0.0, s});
      values.push_back(s);
    }
  }
  return common_goals_table(ctx, name, variants, key, values);
}

}  // namespace paint
