#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <CLI11.hpp>

#include "paint/error.hpp"
#include "paint/experiments.hpp"
#include "paint/features.hpp"
#include "paint/metrics.hpp"
#include "paint/nn.hpp"

using namespace paint;

namespace {

using Big = boost::multiprecision::cpp_bin_float_50;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os.precision(prec);
  os << std::fixed << v;
  return os.str();
}

std::string sci(double v) {
  std::ostringstream os;
  os.precision(2);
  os << std::scientific << v;
  return os.str();
}

// ---------- A1 ----------

Verdict magni_geometry() {
  // The risk is zero where ln(g)^0.8353 = 3.7932.
  const auto inner = [](double g) { return std::pow(std::log(g), 0.8353) - 3.7932; };
  std::uintmax_t iters = 100;
  const auto root = boost::math::tools::toms748_solve(inner, 50.0, 400.0, boost::math::tools::eps_tolerance<double>(50), iters);
  const double g0 = 0.5 * (root.first + root.second);
  const auto brent = boost::math::tools::brent_find_minima([](double g) { return magni_risk(g); }, 100.0, 200.0, 50);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double g = 15.0 + 52.0 * i;
    const Big t = Big("3.5506") * (pow(log(Big(g)), Big("0.8353")) - Big("3.7932"));
    const double want = static_cast<double>(10 * t * t);
    worst = std::max(worst, std::fabs(magni_risk(g) - want) / std::max(want, 1e-300));
  }
  const bool ok = g0 >= 135.0 && g0 <= 143.0 && std::fabs(brent.first - g0) < 1e-3 && worst < 1e-9;
  return {ok, "minimum " + fmt(g0, 4) + " mg/dL, max rel err " + sci(worst)};
}

// ---------- A2 ----------

nn::Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  nn::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

double fd_error(nn::Mlp net, nn::Matrix x, const nn::Matrix& w) {
  const auto loss = [&](const nn::Mlp& m, const nn::Matrix& in) { return (m.forward(in).array() * w.array()).sum(); };
  nn::ForwardCache cache;
  net.forward(x, cache);
  nn::Matrix gin;
  const nn::ParamSet g = net.backward(cache, w, &gin);
  double worst = 0.0;
  const auto rel = [](double a, double b) { return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-6}); };
  for (std::size_t i = 0; i < net.parameter_count(); ++i) {
    const double orig = net.parameter(i);
    const double h = 1e-6 * std::max(1.0, std::fabs(orig));
    net.parameter(i) = orig + h;
    const double up = loss(net, x);
    net.parameter(i) = orig - h;
    const double down = loss(net, x);
    net.parameter(i) = orig;
    worst = std::max(worst, rel((up - down) / (2 * h), nn::Mlp::flat(g, i)));
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + 1e-6;
    const double up = loss(net, x);
    x.data()[i] = orig - 1e-6;
    const double down = loss(net, x);
    x.data()[i] = orig;
    worst = std::max(worst, rel((up - down) / 2e-6, gin.data()[i]));
  }
  return worst;
}

Verdict gradient_checks() {
  Td3bcConfig cfg;
  cfg.hidden = 16;
  nn::Mlp actor = make_actor(cfg, 1);
  actor.layers().back().weight *= 100.0;
  const nn::Mlp critic = make_critic(cfg, 2);
  const nn::Mlp reward({RewardModel::kInputDim, 12, 12, 12, 1},
                       {nn::Activation::kRelu, nn::Activation::kRelu, nn::Activation::kRelu, nn::Activation::kTanh}, 3);
  const nn::Matrix w = random_matrix(1, 6, 6);
  const double a = fd_error(actor, random_matrix(kStateDim, 6, 4), w);
  const double c = fd_error(critic, random_matrix(kStateDim + 1, 6, 5), w);
  const double r = fd_error(reward, random_matrix(kStateDim + 1, 6, 7), w);
  const double worst = std::max({a, c, r});
  return {worst < 1e-4, "max rel err actor " + sci(a) + ", critic " + sci(c) + ", reward " + sci(r)};
}

// ---------- A3 ----------

Verdict activity_curves() {
  bool ok = true;
  std::string detail;
  for (const auto& [name, c, tp, td] : {std::tuple{"insulin", insulin_activity_curve(), 55.0, 240.0},
                                        std::tuple{"carb", carb_activity_curve(), 40.0, 210.0}}) {
    double best_t = 0.0, best = -1.0;
    for (double t = 0.0; t <= c.duration(); t += 0.01) {
      if (c.activity(t) > best) {
        best = c.activity(t);
        best_t = t;
      }
    }
    ok = ok && c.activity(0.0) == 0.0 && c.activity(c.duration()) == 0.0 && c.duration() == td &&
         std::fabs(best_t - tp) <= 5.0;
    detail += std::string(detail.empty() ? "" : ", ") + name + " argmax " + fmt(best_t, 2) + " min";
  }
  return {ok, detail};
}

// ---------- shared desk-scale runs ----------

class Lab {
 public:
  Lab(Scale scale, std::string cache) : scale_(std::move(scale)), cache_(std::move(cache)) {}

  const Scale& scale() const { return scale_; }

  const PatientRun& run(const std::string& patient, std::uint64_t seed) {
    const auto key = std::make_pair(patient, seed);
    auto it = runs_.find(key);
    if (it == runs_.end()) {
      log("prepare " + patient + " seed " + std::to_string(seed));
      it = runs_.emplace(key, prepare_run(patient, seed, scale_, cache_, [](const std::string& m) { log(m); })).first;
    }
    return it->second;
  }

  const ReportSummary& priori(const PatientRun& r) {
    const auto key = std::make_pair(r.patient, r.seed);
    auto it = priori_.find(key);
    if (it == priori_.end()) it = priori_.emplace(key, evaluate_policy(r, r.priori, scale_)).first;
    return it->second;
  }

  Paired tuned(const std::string& patient, std::uint64_t seed, const LabelPlan& plan, double lambda) {
    const auto& r = run(patient, seed);
    log("tune " + patient + " seed " + std::to_string(seed) + " " + plan.preference.name() + " labels " +
        std::to_string(plan.count) + " corrupt " + fmt(plan.corrupt_fraction, 2) + " noise " + fmt(plan.noise_sigmas, 1));
    const auto labels = simulate_labels(r.data, plan, r.seed);
    const auto t = tune_run(r, labels, lambda, scale_);
    return {priori(r), evaluate_policy(r, t.tuned, scale_)};
  }

  LabelPlan plan(const std::string& pref, std::size_t labels = 0) const {
    return {PreferenceFn::from_name(pref), labels ? labels : scale_.labels, 0.0, 0.0};
  }

  static void log(const std::string& m) { std::cerr << "  [" << elapsed() << "s] " << m << std::endl; }
  static long elapsed() {
    static const auto start = std::chrono::steady_clock::now();
    return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::steady_clock::now() - start).count();
  }

 private:
  Scale scale_;
  std::string cache_;
  std::map<std::pair<std::string, std::uint64_t>, PatientRun> runs_;
  std::map<std::pair<std::string, std::uint64_t>, ReportSummary> priori_;
};

// ---------- A4 ----------

Verdict safety_floor(Lab& lab) {
  const auto& r = lab.run("adult", 1);
  // A reward model trained to prefer maximal insulin.
  LabelPlan plan = lab.plan("tir3");
  const auto labels = simulate_labels(r.data, plan, 99);
  const auto t = tune_run(r, labels, 0.0, lab.scale());
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> pick(0, r.data.size() - 1);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto& s = r.data.states[pick(rng)];
    worst = std::max(worst, std::fabs(t.tuned.act(s) - r.priori.act(s)));
  }
  return {worst < 1e-3, "max deviation " + sci(worst) + " U/min over 1000 states"};
}

// ---------- A5 ----------

Verdict priori_competitive(Lab& lab) {
  double rl = 0.0, pid = 0.0;
  std::string detail;
  for (const auto& p : lab.scale().patients) {
    for (auto s : lab.scale().seeds) {
      const auto& r = lab.run(p, s);
      const double a = lab.priori(r).magni_risk_total;
      const double b = evaluate_pid(r, lab.scale()).magni_risk_total;
      rl += a;
      pid += b;
      lab.log("A5 " + p + " seed " + std::to_string(s) + ": priori " + fmt(a, 0) + " pid " + fmt(b, 0));
    }
  }
  const double ratio = rl / pid;
  return {ratio <= 1.1, "mean Magni total priori/PID = " + fmt(ratio)};
}

// ---------- A6 ----------

Verdict target_following(Lab& lab) {
  std::vector<double> m120, m160;
  for (const auto& p : lab.scale().patients) {
    m120.push_back(lab.tuned(p, 1, lab.plan("target-120"), lab.scale().lambda).tuned.mean_glucose);
    m160.push_back(lab.tuned(p, 1, lab.plan("target-160"), lab.scale().lambda).tuned.mean_glucose);
  }
  const double a = median(m120), b = median(m160);
  const bool ok = a < b && std::fabs(a - 120.0) <= 10.0 && std::fabs(b - 160.0) <= 10.0;
  return {ok, "median mean glucose " + fmt(a, 1) + " (target 120), " + fmt(b, 1) + " (target 160)"};
}

// ---------- A7, A10, A12 ----------

struct GoalResult {
  std::size_t patients_ok = 0;
  std::string detail;
};

GoalResult goal_over_patients(Lab& lab, const Goal& goal, std::size_t labels, double noise) {
  GoalResult out;
  for (const auto& p : lab.scale().patients) {
    std::vector<double> change;
    for (auto s : lab.scale().seeds) {
      LabelPlan plan = lab.plan(goal.preference, labels);
      plan.noise_sigmas = noise;
      const auto pr = lab.tuned(p, s, plan, lab.scale().lambda);
      change.push_back(metric_of(pr.tuned, goal.metric) - metric_of(pr.priori, goal.metric));
    }
    const double m = median(change);
    const bool ok = goal.increase ? m > 0.0 : m < 0.0;
    out.patients_ok += ok;
    out.detail += (out.detail.empty() ? "" : " ") + p + "=" + (m >= 0 ? "+" : "") + fmt(m, 2);
  }
  return out;
}

Verdict common_goal_directions(Lab& lab, std::size_t labels, double noise, bool tir_only = false) {
  bool ok = true;
  std::string detail;
  for (const auto& goal : common_goals()) {
    if (tir_only && goal.metric != "tir") continue;
    const auto r = goal_over_patients(lab, goal, labels, noise);
    ok = ok && r.patients_ok >= 2;
    detail += (detail.empty() ? "" : "; ") + goal.preference + " " + goal.metric + " " + r.detail + " (" +
              std::to_string(r.patients_ok) + "/" + std::to_string(lab.scale().patients.size()) + ")";
  }
  return {ok, detail};
}

// ---------- A8, A9 ----------

std::vector<Paired> all_runs(Lab& lab, const std::string& pref) {
  std::vector<Paired> out;
  for (const auto& p : lab.scale().patients) {
    for (auto s : lab.scale().seeds) out.push_back(lab.tuned(p, s, lab.plan(pref), lab.scale().lambda));
  }
  return out;
}

double median_change(const std::vector<Paired>& ps, const std::string& metric) {
  std::vector<double> d;
  for (const auto& p : ps) d.push_back(metric_of(p.tuned, metric) - metric_of(p.priori, metric));
  return median(std::move(d));
}

Verdict mealtime_case(Lab& lab) {
  const double d = median_change(all_runs(lab, "mealtime"), "post_meal_tir");
  return {d >= 2.0, "median post-meal TIR change " + fmt(d, 2) + " points"};
}

Verdict compression_case(Lab& lab) {
  const auto ps = all_runs(lab, "compression");
  const double basal = median_change(ps, "post_event_basal");
  const double cov = median_change(ps, "post_event_cov");
  return {basal > 0.0 && cov <= -0.5,
          "median post-event basal change " + sci(basal) + " U/min, CoV change " + fmt(cov, 2) + " points"};
}

// ---------- A11, A12 ----------

Verdict risk_within(Lab& lab, double corrupt, double noise) {
  double pri = 0.0, tun = 0.0;
  for (const auto& p : lab.scale().patients) {
    for (auto s : lab.scale().seeds) {
      LabelPlan plan = lab.plan("tir2");
      plan.corrupt_fraction = corrupt;
      plan.noise_sigmas = noise;
      const auto pr = lab.tuned(p, s, plan, lab.scale().lambda);
      pri += pr.priori.magni_risk_total;
      tun += pr.tuned.magni_risk_total;
    }
  }
  const double ratio = tun / pri;
  return {ratio <= 1.2, "mean Magni total tuned/priori = " + fmt(ratio)};
}

// ---------- A13 ----------

Verdict determinism() {
  ExperimentOptions o;
  o.scale.samples = 4000;
  o.scale.labels = 500;
  o.scale.patients = {"adult", "child"};
  o.scale.seeds = {1};
  o.scale.eval_days = 2;
  o.scale.eval_repeats = 2;
  o.scale.td3.hidden = 32;
  o.scale.td3.epochs_pretrain = 20;
  o.scale.td3.epochs_tune = 10;
  o.scale.td3.epochs_critic_warmup = 10;
  o.scale.reward.hidden = {32, 32};
  o.scale.reward.max_epochs = 30;
  const auto a = run_experiment("common-goals", o);
  const auto b = run_experiment("common-goals", o);
  const bool ok = !a.rows.empty() && a.to_jsonl() == b.to_jsonl();
  return {ok, std::to_string(a.runs.size() + a.rows.size()) + " records, tables " + (ok ? "identical" : "differ")};
}

// ---------- A14 ----------

Verdict stratified_sampler(Lab& lab) {
  const auto& r = lab.run("adult", 1);
  const auto labels = simulate_labels(r.data, lab.plan("cov1"), 5).labels();
  std::vector<double> rewards;
  for (const auto& l : labels) rewards.push_back(l.reward);
  StratifiedSampler s(rewards, 10, 11);
  std::vector<std::size_t> live;
  std::size_t smallest = rewards.size(), largest = 0;
  for (std::size_t k = 0; k < s.strata(); ++k) {
    if (s.members()[k].empty()) continue;
    live.push_back(k);
    smallest = std::min(smallest, s.members()[k].size());
    largest = std::max(largest, s.members()[k].size());
  }
  std::vector<double> total(s.strata(), 0.0);
  bool balanced = true;
  const std::size_t batches = 10000, batch = 128;
  for (std::size_t b = 0; b < batches; ++b) {
    std::vector<int> c(s.strata(), 0);
    for (std::size_t i : s.batch(batch)) ++c[s.stratum_of(rewards[i])];
    int lo = 1 << 30, hi = 0;
    for (std::size_t k : live) {
      lo = std::min(lo, c[k]);
      hi = std::max(hi, c[k]);
    }
    balanced = balanced && hi - lo <= 1;
    for (std::size_t k = 0; k < c.size(); ++k) total[k] += c[k];
  }
  const double share = 1.0 / static_cast<double>(live.size());
  double worst = 0.0;
  for (std::size_t k : live) worst = std::max(worst, std::fabs(total[k] / (batches * batch) - share) / share);
  return {balanced && worst <= 0.02,
          std::to_string(live.size()) + " strata sized " + std::to_string(smallest) + ".." + std::to_string(largest) +
              ", max frequency deviation " + fmt(100.0 * worst, 3) + "%"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks A1-A14"};
  std::string cache;
  std::set<std::string> only;
  app.add_option("--cache", cache, "Priori cache directory");
  app.add_option("--only", only, "Run a subset, e.g. --only A1 A7");
  CLI11_PARSE(app, argc, argv);

  // The empirical reproductions (A5-A12) are reported but do not fail the run;
  // the property checks (A1-A4, A13, A14) do.
  const std::set<std::string> gating{"A1", "A2", "A3", "A4", "A13", "A14"};
  Lab lab(Scale::desk(), cache);
  const std::vector<std::pair<std::string, std::function<Verdict()>>> checks{
      {"A1", magni_geometry},
      {"A2", gradient_checks},
      {"A3", activity_curves},
      {"A4", [&] { return safety_floor(lab); }},
      {"A5", [&] { return priori_competitive(lab); }},
      {"A6", [&] { return target_following(lab); }},
      {"A7", [&] { return common_goal_directions(lab, 0, 0.0); }},
      {"A8", [&] { return mealtime_case(lab); }},
      {"A9", [&] { return compression_case(lab); }},
      {"A10", [&] { return common_goal_directions(lab, 1000, 0.0, true); }},
      {"A11", [&] { return risk_within(lab, 0.8, 0.0); }},
      {"A12",
       [&] {
         const auto dir = common_goal_directions(lab, 0, 3.0);
         const auto risk = risk_within(lab, 0.0, 10.0);
         return Verdict{dir.pass && risk.pass, "3 sigma: " + dir.detail + "; 10 sigma: " + risk.detail};
       }},
      {"A13", determinism},
      {"A14", [&] { return stratified_sampler(lab); }},
  };

  std::size_t passed = 0, failed = 0, gating_failed = 0;
  for (const auto& [id, fn] : checks) {
    if (!only.empty() && !only.count(id)) continue;
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    (v.pass ? passed : failed)++;
    if (!v.pass && gating.count(id)) ++gating_failed;
    std::cout << id << ' ' << (v.pass ? "PASS" : "FAIL") << ' ' << v.detail << " [" << Lab::elapsed() << "s]"
              << std::endl;
  }
  std::cout << "summary: " << passed << " passed, " << failed << " failed, " << gating_failed
            << " failed property checks" << std::endl;
  return gating_failed == 0 ? 0 : 1;
}
