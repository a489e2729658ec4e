#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "paint/error.hpp"
#include "paint/safe_orl.hpp"
#include "test_support.hpp"

using namespace paint;
using paint::testing::TempDir;

namespace {

struct Fixture {
  OfflineDataset data = paint::testing::small_dataset(2000, 11, 1);
  Normalizer norm = Normalizer::fit(data.states);
  double max_basal = 0.06;
  Td3bcConfig config = paint::testing::tiny_td3();
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

const Policy& priori() {
  static const Policy p = [] {
    const auto& f = fixture();
    return train_priori(f.data, f.norm, f.max_basal, f.config);
  }();
  return p;
}

std::vector<std::size_t> first_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

double max_deviation(const Policy& a, const Policy& b, const OfflineDataset& data) {
  double worst = 0.0;
  for (const auto& s : data.states) worst = std::max(worst, std::fabs(a.act(s) - b.act(s)));
  return worst;
}

}  // namespace

TEST(Actions, UnitMappingInverts) {
  EXPECT_DOUBLE_EQ(to_basal(-1.0, 0.08), 0.0);
  EXPECT_DOUBLE_EQ(to_basal(1.0, 0.08), 0.08);
  for (double b = 0.0; b <= 0.08; b += 0.004) EXPECT_NEAR(to_basal(to_unit_action(b, 0.08), 0.08), b, 1e-15);
}

TEST(CriticTargets, OneStepNoDiscountIsScaledReward) {
  const auto& f = fixture();
  std::vector<double> r(f.data.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = 0.5 * std::cos(0.01 * static_cast<double>(i));
  Td3bcConfig c = f.config;
  c.gamma = 0.0;
  c.n_steps = 1;
  const TransitionSource src(f.data, f.norm, f.max_basal, r, c);
  ActorCritic nets(make_actor(c, 1), make_critic(c, 2), make_critic(c, 3), c);
  std::mt19937_64 rng(1);
  const auto idx = first_n(64);
  const auto batch = src.batch(idx);
  const auto y = critic_targets(batch, nets, c, rng);
  for (std::size_t j = 0; j < idx.size(); ++j) {
    EXPECT_DOUBLE_EQ(y(0, static_cast<Eigen::Index>(j)), r[src.views()[idx[j]].state] / c.reward_scale);
  }
}

TEST(CriticTargets, ZeroRewardsAndZeroCriticsGiveZeroLoss) {
  const auto& f = fixture();
  const std::vector<double> r(f.data.size(), 0.0);
  Td3bcConfig c = f.config;
  const TransitionSource src(f.data, f.norm, f.max_basal, r, c);
  auto zero = [&](std::uint64_t s) {
    nn::Mlp m = make_critic(c, s);
    m.layers().back().weight.setZero();
    m.layers().back().bias.setZero();
    return m;
  };
  ActorCritic nets(make_actor(c, 1), zero(2), zero(3), c);
  std::mt19937_64 rng(1);
  const auto batch = src.batch(first_n(128));
  EXPECT_EQ(critic_targets(batch, nets, c, rng).cwiseAbs().maxCoeff(), 0.0);
  const auto loss = critic_update(batch, nets, c, rng);
  EXPECT_EQ(loss.critic1, 0.0);
  EXPECT_EQ(loss.critic2, 0.0);
}

TEST(CriticTargets, BootstrapUsesMinimumOfTargetCritics) {
  const auto& f = fixture();
  const std::vector<double> r(f.data.size(), 1.0);
  Td3bcConfig c = f.config;
  c.policy_noise = 0.0;
  const TransitionSource src(f.data, f.norm, f.max_basal, r, c);
  ActorCritic nets(make_actor(c, 1), make_critic(c, 2), make_critic(c, 3), c);
  std::mt19937_64 rng(1);
  const auto batch = src.batch(first_n(32));
  const auto y = critic_targets(batch, nets, c, rng);
  const nn::Matrix u = nets.actor_target.forward(batch.next_states);
  nn::Matrix x(kStateDim + 1, 32);
  x.topRows(kStateDim) = batch.next_states;
  x.bottomRows(1) = u;
  const nn::Matrix q1 = nets.critic1_target.forward(x), q2 = nets.critic2_target.forward(x);
  for (Eigen::Index j = 0; j < 32; ++j) {
    const double expect = batch.returns(0, j) / c.reward_scale + batch.bootstrap(0, j) * std::min(q1(0, j), q2(0, j));
    EXPECT_NEAR(y(0, j), expect, 1e-12);
  }
}

TEST(ActorObjective, GradientMatchesFiniteDifference) {
  const auto& f = fixture();
  Td3bcConfig c = f.config;
  nn::Mlp actor = make_actor(c, 4);
  actor.layers().back().weight *= 50.0;
  const nn::Mlp critic = make_critic(c, 5);
  const TransitionSource src(f.data, f.norm, f.max_basal, std::vector<double>(f.data.size(), 0.0), c);
  const auto batch = src.batch(first_n(16));
  nn::ParamSet g;
  actor_objective(actor, critic, batch.states, batch.bc_targets, 2.5, &g);
  // lambda_hat is treated as a constant inside the gradient.
  const double lam = actor_objective(actor, critic, batch.states, batch.bc_targets, 2.5).lambda_hat;
  auto loss = [&](const nn::Mlp& a) {
    const auto l = actor_objective(a, critic, batch.states, batch.bc_targets, 2.5);
    return -lam * l.mean_q + l.bc;
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < actor.parameter_count(); i += 7) {
    const double orig = actor.parameter(i);
    const double h = 1e-6;
    actor.parameter(i) = orig + h;
    const double up = loss(actor);
    actor.parameter(i) = orig - h;
    const double down = loss(actor);
    actor.parameter(i) = orig;
    const double fd = (up - down) / (2 * h), an = nn::Mlp::flat(g, i);
    worst = std::max(worst, std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-6}));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(ActorObjective, ZeroWeightCloningHasZeroGradientAtTarget) {
  const auto& f = fixture();
  const nn::Mlp actor = make_actor(f.config, 4);
  const nn::Mlp critic = make_critic(f.config, 5);
  const TransitionSource src(f.data, f.norm, f.max_basal, std::vector<double>(f.data.size(), 0.0), f.config);
  const auto batch = src.batch(first_n(64));
  const nn::Matrix own = actor.forward(batch.states);
  nn::ParamSet g;
  const auto l = actor_objective(actor, critic, batch.states, own, 0.0, &g);
  EXPECT_EQ(l.bc, 0.0);
  EXPECT_EQ(l.lambda_hat, 0.0);
  for (std::size_t i = 0; i < actor.parameter_count(); ++i) EXPECT_EQ(nn::Mlp::flat(g, i), 0.0);
}

TEST(ActorObjective, CloningAloneReducesBcLoss) {
  const auto& f = fixture();
  Td3bcConfig c = f.config;
  ActorCritic nets(make_actor(c, 1), make_critic(c, 2), make_critic(c, 3), c);
  const TransitionSource src(f.data, f.norm, f.max_basal, std::vector<double>(f.data.size(), 0.0), c);
  UniformSampler sampler(src.size(), 4);
  const auto probe = src.batch(first_n(512));
  const double before = actor_objective(nets.actor, nets.critic1, probe.states, probe.bc_targets, 0.0).bc;
  for (int i = 0; i < 400; ++i) actor_update(src.batch(sampler.batch(64)), nets, 0.0, c);
  const double after = actor_objective(nets.actor, nets.critic1, probe.states, probe.bc_targets, 0.0).bc;
  EXPECT_LT(after, 0.5 * before);
}

TEST(Priori, OutputsStayInRangeAndTrainingIsDeterministic) {
  const auto& f = fixture();
  const Policy& p = priori();
  for (const auto& s : f.data.states) {
    const double a = p.act(s);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, f.max_basal);
  }
  TrainingLog log;
  const Policy again = train_priori(f.data, f.norm, f.max_basal, f.config, &log);
  EXPECT_EQ(max_deviation(p, again, f.data), 0.0);
  EXPECT_TRUE(log.targets_finite);
  EXPECT_EQ(log.steps, (f.config.epochs_pretrain) * f.config.steps_per_epoch);
}

TEST(Tune, LambdaZeroKeepsPrioriAndNegativeThrows) {
  const auto& f = fixture();
  std::vector<double> adversarial(f.data.size());
  for (std::size_t i = 0; i < adversarial.size(); ++i) adversarial[i] = f.data.actions[i] > 0.02 ? 1.0 : -1.0;
  const Policy t = tune_policy(f.data, priori(), adversarial, 0.0, f.config);
  EXPECT_LT(max_deviation(t, priori(), f.data), 1e-3);
  try {
    tune_policy(f.data, priori(), adversarial, -0.1, f.config);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
}

TEST(Tune, DeviationGrowsWithLambda) {
  const auto& f = fixture();
  Td3bcConfig c = f.config;
  c.epochs_tune = 4;
  std::vector<double> r(f.data.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = -to_unit_action(f.data.actions[i], f.max_basal);
  double last = -1.0;
  for (double lambda : {0.0, 2.5, 10.0}) {
    const double d = max_deviation(tune_policy(f.data, priori(), r, lambda, c), priori(), f.data);
    EXPECT_GE(d, last - 1e-9) << lambda;
    last = d;
  }
  EXPECT_GT(last, 1e-3);
}

TEST(Bundle, ActiveSwitchesAndRoundTrips) {
  const auto& f = fixture();
  PolicyBundle b;
  b.priori = priori();
  b.patient_id = "adult";
  b.dataset_hash = f.data.hash();
  b.seed = 3;
  EXPECT_EQ(b.act(f.data.states[10]), priori().act(f.data.states[10]));
  std::vector<double> r(f.data.size(), 0.0);
  b.tuned = tune_policy(f.data, priori(), r, 1.0, f.config);
  b.lambda = 1.0;
  b.preference = "tir2";
  TempDir dir("paint-bundle");
  b.save(dir / "b");
  const auto back = PolicyBundle::load(dir / "b");
  ASSERT_TRUE(back.tuned);
  EXPECT_FALSE(back.reward);
  EXPECT_EQ(back.patient_id, "adult");
  EXPECT_EQ(back.dataset_hash, f.data.hash());
  EXPECT_DOUBLE_EQ(back.lambda, 1.0);
  EXPECT_EQ(back.preference, "tir2");
  for (std::size_t i = 0; i < f.data.size(); i += 97) EXPECT_EQ(back.act(f.data.states[i]), b.act(f.data.states[i]));
  EXPECT_THROW(PolicyBundle::load(dir / "missing"), Error);
}

TEST(Config, RejectsBadValues) {
  Td3bcConfig c;
  c.gamma = 1.5;
  EXPECT_THROW(c.validate(), Error);
  c = Td3bcConfig{};
  c.critic_head_scale = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = Td3bcConfig{};
  c.n_steps = 0;
  EXPECT_THROW(c.validate(), Error);
}
