#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace lrcomb;

namespace {

WorldConfig world(Index n, Index m, Index r) {
  WorldConfig cfg;
  cfg.n_users = n;
  cfg.n_items = m;
  cfg.rank = r;
  cfg.seed = 42;
  return cfg;
}

}  // namespace

TEST(Seeds, DeriveIsDeterministicAndSpreads) {
  EXPECT_EQ(derive_seed(1, 2), derive_seed(1, 2));
  EXPECT_NE(derive_seed(1, 2), derive_seed(1, 3));
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
  EXPECT_EQ(derive_seed(5, 9), mix64(5 ^ mix64(9)));
}

TEST(Synthetic, SingleEntryEqualsB) {
  Rng rng(1);
  const RewardMatrix t = gen_synthetic_theta(world(1, 1, 1), rng);
  EXPECT_DOUBLE_EQ(t(0, 0), 10.0);
}

TEST(Synthetic, BoxAndRank) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const RewardMatrix t = gen_synthetic_theta(world(30, 20, 3), rng);
    EXPECT_NO_THROW(check_ground_truth(t, 10.0));
    EXPECT_DOUBLE_EQ(t.maxCoeff(), 10.0);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(t);
    int numerical_rank = 0;
    for (Index k = 0; k < svd.singularValues().size(); ++k) numerical_rank += svd.singularValues()(k) > 1e-9;
    EXPECT_LE(numerical_rank, 3);
  }
}

TEST(Synthetic, SeedDeterminism) {
  Rng a(77), b(77);
  EXPECT_EQ(gen_synthetic_theta(world(8, 6, 2), a), gen_synthetic_theta(world(8, 6, 2), b));
}

TEST(Synthetic, RankTooLarge) {
  Rng rng(1);
  EXPECT_THROW(gen_synthetic_theta(world(3, 2, 3), rng), InvalidArgument);
}

TEST(Synthetic, NoiseKnobStaysInBox) {
  Rng rng(3);
  WorldConfig cfg = world(20, 10, 2);
  cfg.theta_noise = 0.1;
  const RewardMatrix t = gen_synthetic_theta(cfg, rng);
  EXPECT_NO_THROW(check_ground_truth(t, 10.0));
}

TEST(Constraints, StaticFourByTwo) {
  Rng rng(1);
  const WorldConfig cfg = world(4, 2, 1);
  EXPECT_EQ(capacity_ceiling(cfg, 4), 6);
  for (int t = 1; t <= 20; ++t) {
    const ConstraintProfile p = sample_constraints(cfg, rng, t);
    EXPECT_EQ(p.demands(), std::vector<std::int64_t>(4, 1));
    for (auto c : p.capacities()) {
      EXPECT_GE(c, 1);
      EXPECT_LE(c, 6);
    }
  }
}

TEST(Constraints, StaticProfileIsIdenticalEveryRound) {
  Rng rng(2);
  const WorldConfig cfg = world(40, 10, 2);
  const ConstraintProfile first = sample_constraints(cfg, rng, 1);
  for (int t = 2; t <= 30; ++t) EXPECT_EQ(sample_constraints(cfg, rng, t), first);
  WorldConfig other = cfg;
  other.seed = 43;
  bool differs = false;
  for (std::uint64_t s = 43; s < 53 && !differs; ++s) {
    other.seed = s;
    differs = !(sample_constraints(other, rng, 1) == first);
  }
  EXPECT_TRUE(differs);
}

TEST(Constraints, DynamicInactiveRoundFloorsCmax) {
  Rng rng(3);
  WorldConfig cfg = world(10, 4, 1);
  cfg.dynamics = Dynamics::Dynamic;
  cfg.p_active = 0.0;
  const ConstraintProfile p = sample_constraints(cfg, rng, 1);
  EXPECT_EQ(p.demands(), std::vector<std::int64_t>(10, 0));
  EXPECT_EQ(p.capacities(), std::vector<std::int64_t>(4, 1));
}

TEST(Constraints, DynamicFollowsCeilingRule) {
  Rng rng(4);
  WorldConfig cfg = world(80, 12, 3);
  cfg.dynamics = Dynamics::Dynamic;
  double active = 0.0;
  constexpr int kRounds = 2000;
  for (int t = 1; t <= kRounds; ++t) {
    const ConstraintProfile p = sample_constraints(cfg, rng, t);
    std::int64_t total = 0;
    for (auto d : p.demands()) {
      ASSERT_TRUE(d == 0 || d == 1);
      total += d;
    }
    active += static_cast<double>(total);
    const std::int64_t cmax = std::max<std::int64_t>(1, (3 * total + 11) / 12);
    for (auto c : p.capacities()) {
      ASSERT_GE(c, 1);
      ASSERT_LE(c, cmax);
    }
  }
  EXPECT_NEAR(active / (80.0 * kRounds), 0.2, 0.01);
}

TEST(Constraints, IncludeZeroFlag) {
  Rng rng(5);
  WorldConfig cfg = world(4, 50, 1);
  cfg.include_zero_capacity = true;
  cfg.c_max_fixed = 1;
  const ConstraintProfile p = sample_constraints(cfg, rng, 1);
  EXPECT_TRUE(std::count(p.capacities().begin(), p.capacities().end(), 0) > 0);
}

TEST(Rewards, NoiselessEqualsMeans) {
  Rng rng(6);
  const RewardMatrix t = fixture::uniform_theta(3, 3, 0, 10, rng);
  const auto rewards = sample_rewards(t, AllocationMatrix::all_ones(3, 3), 0.0, rng);
  ASSERT_EQ(rewards.size(), 9u);
  for (const auto& r : rewards) EXPECT_EQ(r.reward, t(r.user, r.item));
}

TEST(Rewards, EmptyAllocation) {
  Rng rng(7);
  EXPECT_TRUE(sample_rewards(RewardMatrix::Ones(2, 2), AllocationMatrix(2, 2), 1.0, rng).empty());
}

TEST(Rewards, MonteCarloMean) {
  Rng rng(8);
  RewardMatrix t = RewardMatrix::Zero(1, 2);
  t(0, 1) = 3.7;
  const auto x = AllocationMatrix::unit(1, 2, {0, 1});
  double sum = 0.0, sq = 0.0;
  constexpr int kDraws = 100000;
  for (int k = 0; k < kDraws; ++k) {
    const double r = sample_rewards(t, x, 1.0, rng).front().reward;
    sum += r;
    sq += r * r;
  }
  const double mean = sum / kDraws;
  EXPECT_NEAR(mean, 3.7, 0.02);
  EXPECT_NEAR(sq / kDraws - mean * mean, 1.0, 0.02);
}

TEST(Drop, FeasibleRequestUntouched) {
  Rng rng(9);
  const std::vector<Arm> arms{{0, 0}, {1, 1}};
  const auto x = AllocationMatrix::from_arms(2, 2, arms);
  const auto r = apply_capacity_drop(x, ConstraintProfile({1, 1}, {1, 1}), rng);
  EXPECT_EQ(r.realized, x);
  EXPECT_TRUE(r.dropped.empty());
}

TEST(Drop, ZeroCapacityDropsAll) {
  Rng rng(10);
  const auto x = AllocationMatrix::all_ones(3, 1);
  const auto r = apply_capacity_drop(x, ConstraintProfile({0}, {1, 1, 1}), rng);
  EXPECT_EQ(r.realized.count(), 0);
  EXPECT_EQ(r.dropped.size(), 3u);
}

TEST(Drop, UniformSurvivor) {
  Rng rng(11);
  const auto x = AllocationMatrix::all_ones(3, 1);
  const ConstraintProfile p({1}, {1, 1, 1});
  std::array<int, 3> kept{};
  constexpr int kTrials = 10000;
  for (int k = 0; k < kTrials; ++k) {
    const auto r = apply_capacity_drop(x, p, rng);
    ASSERT_EQ(r.realized.count(), 1);
    ASSERT_EQ(r.dropped.size(), 2u);
    for (Index u = 0; u < 3; ++u) kept[static_cast<std::size_t>(u)] += r.realized(u, 0);
  }
  for (int c : kept) EXPECT_NEAR(static_cast<double>(c) / kTrials, 1.0 / 3.0, 0.02);
}

TEST(Drop, RealizedAlwaysFeasibleAndDisjoint) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const ConstraintProfile p = fixture::random_profile(12, 5, 3, 2, rng);
    AllocationMatrix x(12, 5);
    std::uniform_int_distribution<Index> item(0, 4);
    for (Index u = 0; u < 12; ++u)
      for (std::int64_t k = 0; k < p.demand(u); ++k) x.set(u, item(rng), true);
    const auto r = apply_capacity_drop(x, p, rng);
    EXPECT_TRUE(is_feasible(r.realized, p));
    EXPECT_EQ(r.realized.count() + static_cast<std::int64_t>(r.dropped.size()), x.count());
    for (const Arm& a : r.dropped) {
      EXPECT_TRUE(x(a.user, a.item));
      EXPECT_FALSE(r.realized(a.user, a.item));
    }
  }
}
