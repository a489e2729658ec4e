#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "paint/datastore.hpp"
#include "paint/metrics.hpp"
#include "paint/error.hpp"
#include "test_support.hpp"

using namespace paint;
using paint::testing::TempDir;

TEST(TrajectoryFile, RoundTripTenDays) {
  const auto data = paint::testing::small_dataset(4800, 6, 10);
  ASSERT_EQ(data.episodes.size(), 1u);
  std::stringstream ss;
  write_trajectory(ss, data.episodes[0]);
  const auto back = read_trajectory(ss);
  EXPECT_TRUE(back == data.episodes[0]);
}

TEST(TrajectoryFile, DeterministicBytesAndHash) {
  const auto a = paint::testing::small_dataset(1500, 6, 1);
  const auto b = paint::testing::small_dataset(1500, 6, 1);
  std::stringstream sa, sb;
  write_trajectory(sa, a.episodes[0]);
  write_trajectory(sb, b.episodes[0]);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(a.hash().size(), 16u);
  EXPECT_NE(a.hash(), paint::testing::small_dataset(1500, 7, 1).hash());
}

TEST(TrajectoryFile, RejectsCorruptLengthAndVersion) {
  const auto data = paint::testing::small_dataset(500, 6, 1);
  std::stringstream ss;
  write_trajectory(ss, data.episodes[0]);
  const std::string bytes = ss.str();
  std::stringstream cut(bytes.substr(0, bytes.size() / 2));
  try {
    read_trajectory(cut);
    FAIL() << "truncated record accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTruncated);
  }
  std::string ver = bytes;
  ver[8] = static_cast<char>(99);
  std::stringstream vs(ver);
  try {
    read_trajectory(vs);
    FAIL() << "wrong version accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kVersionMismatch);
  }
}

TEST(DatasetFile, RoundTripAndCsv) {
  TempDir dir("paint-ds");
  const auto data = paint::testing::small_dataset(2000, 3, 1);
  write_dataset_file(dir / "d.paintds", data.episodes);
  const auto back = read_dataset_file(dir / "d.paintds");
  ASSERT_EQ(back.size(), data.episodes.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_TRUE(back[i] == data.episodes[i]);
  std::stringstream csv;
  write_csv(csv, data.episodes[0]);
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "t,glucose_mgdl,basal_u_min,bolus_u,carbs_g");
  std::size_t rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  EXPECT_EQ(rows, data.episodes[0].size());
  EXPECT_THROW(read_dataset_file(dir / "missing"), Error);
}

TEST(Dataset, FlatIndexing) {
  const auto data = paint::testing::small_dataset(2000, 3, 1);
  ASSERT_GE(data.episodes.size(), 2u);
  EXPECT_EQ(data.size(), 2000u);
  const std::size_t f = data.flat_index(1, 7);
  EXPECT_EQ(f, data.episodes[0].size() + 7);
  EXPECT_EQ(data.episode_of(f), 1u);
  EXPECT_EQ(data.episode_of(0), 0u);
}

TEST(Assemble, SingleStepRewards) {
  const auto data = paint::testing::small_dataset(1000, 3, 1);
  std::vector<double> r(data.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = std::sin(0.1 * static_cast<double>(i));
  const auto views = assemble(data, r, 1, 0.9);
  for (const auto& v : views) {
    EXPECT_EQ(v.reward_count, 1u);
    EXPECT_DOUBLE_EQ(v.discounted_return, r[v.state]);
    if (v.next_state) {
      EXPECT_EQ(*v.next_state, v.state + 1);
      EXPECT_DOUBLE_EQ(v.bootstrap_discount, 0.9);
    }
  }
}

TEST(Assemble, ShortEpisodeNeverBorrowsNext) {
  auto a = paint::testing::make_trace({100, 110, 120, 130, 140});
  auto b = paint::testing::make_trace({150, 160, 170, 180, 190, 200});
  b.episode_id = 1;
  const auto params = load_patient("adult").params;
  const auto data = OfflineDataset::build(params, {a, b});
  std::vector<double> r(data.size(), 1.0);
  const auto views = assemble(data, r, 10, 0.5);
  for (const auto& v : views) {
    const std::size_t ep = data.episode_of(v.state);
    const std::size_t end = data.offsets[ep] + data.episodes[ep].size();
    EXPECT_LE(v.reward_begin + v.reward_count, end - 1);
    if (v.next_state) {
      EXPECT_EQ(*v.next_state, end - 1);
      EXPECT_EQ(data.episode_of(*v.next_state), ep);
    }
  }
  EXPECT_EQ(views.size(), 4u + 5u);
}

TEST(Assemble, DiscountedSumMatchesBruteForce) {
  const auto data = paint::testing::small_dataset(3000, 8, 1);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> r(data.size());
  for (auto& x : r) x = u(rng);
  const double gamma = 0.97;
  const auto views = assemble(data, r, 10, gamma);
  std::uniform_int_distribution<std::size_t> pick(0, views.size() - 1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto& v = views[pick(rng)];
    const std::size_t ep = data.episode_of(v.state);
    const std::size_t last = data.offsets[ep] + data.episodes[ep].size() - 1;
    double sum = 0.0, disc = 1.0;
    std::size_t k = 0;
    for (std::size_t i = v.state; i < last && k < 10; ++i, ++k) {
      sum += disc * r[i];
      disc *= gamma;
    }
    EXPECT_NEAR(v.discounted_return, sum, 1e-12);
    EXPECT_EQ(v.reward_count, k);
    EXPECT_NEAR(v.bootstrap_discount, std::pow(gamma, static_cast<double>(k)), 1e-15);
  }
}

TEST(Assemble, TerminalEpisodeHasNoBootstrap) {
  auto a = paint::testing::make_trace({100, 80, 50, 20, 9});
  a.terminated = true;
  const auto data = OfflineDataset::build(load_patient("adult").params, {a});
  const auto r = safety_rewards(data);
  EXPECT_DOUBLE_EQ(r.back(), kTerminationPenalty);
  EXPECT_NEAR(r[0], -magni_risk(80.0), 1e-12);
  const auto views = assemble(data, r, 10, 0.99);
  ASSERT_EQ(views.size(), 5u);
  for (const auto& v : views) {
    EXPECT_TRUE(v.done);
    EXPECT_FALSE(v.next_state.has_value());
  }
}

TEST(UniformSampler, ReproducibleAndUniform) {
  UniformSampler a(10, 3), b(10, 3);
  EXPECT_EQ(a.batch(50), b.batch(50));
  UniformSampler s(10, 99);
  std::vector<int> counts(10, 0);
  for (int i = 0; i < 1000000; ++i) ++counts[s.next()];
  for (int c : counts) EXPECT_NEAR(c / 100000.0, 1.0, 0.02);
}
