#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace lrcomb;

namespace {

RewardMatrix theta_3x2() {
  RewardMatrix t(3, 2);
  t << 3, 1, 2, 2, 0, 4;
  return t;
}

const ConstraintProfile kProfile3x2({1, 2}, {1, 1, 1});

std::vector<std::uint8_t> bits(std::initializer_list<int> v) { return {v.begin(), v.end()}; }

}  // namespace

TEST(SolveExact, SingleEntry) {
  const auto r = solve_exact(RewardMatrix::Constant(1, 1, 5.0), ConstraintProfile({1}, {1}));
  EXPECT_TRUE(r.allocation(0, 0));
  EXPECT_EQ(r.value, 5.0);
}

TEST(SolveExact, NegativeEntryNeverAllocated) {
  const auto r = solve_exact(RewardMatrix::Constant(1, 1, -2.0), ConstraintProfile({1}, {1}));
  EXPECT_FALSE(r.allocation(0, 0));
  EXPECT_EQ(r.value, 0.0);
}

TEST(SolveExact, ThreeByTwo) {
  const auto r = solve_exact(theta_3x2(), kProfile3x2);
  EXPECT_EQ(r.value, 9.0);
  const std::vector<Arm> expected{{0, 0}, {1, 1}, {2, 1}};
  EXPECT_EQ(r.allocation.arms(), expected);
}

TEST(SolveExact, RejectsBadInput) {
  EXPECT_THROW(solve_exact(RewardMatrix::Zero(2, 2), ConstraintProfile({1}, {1, 1})), InvalidArgument);
  RewardMatrix t = RewardMatrix::Zero(1, 1);
  t(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(solve_exact(t, ConstraintProfile({1}, {1})), InvalidArgument);
}

TEST(SolveExact, ZeroOrNegativeEntriesNeverChosen) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const RewardMatrix t = fixture::grid_theta(5, 4, rng);
    const auto r = solve_exact(t, fixture::random_profile(5, 4, 3, 3, rng));
    for (const Arm& a : r.allocation.arms()) EXPECT_GT(t(a.user, a.item), 0.0);
  }
}

TEST(BruteForce, MatchesThreeByTwo) { EXPECT_EQ(brute_force_allocation(theta_3x2(), kProfile3x2).value, 9.0); }

TEST(BruteForce, ZeroCapacities) {
  const auto r = brute_force_allocation(RewardMatrix::Constant(2, 3, 4.0), ConstraintProfile({0, 0, 0}, {1, 1}));
  EXPECT_EQ(r.allocation.count(), 0);
  EXPECT_EQ(r.value, 0.0);
}

TEST(BruteForce, AllOnesTieBreak) {
  const auto r = brute_force_allocation(RewardMatrix::Ones(2, 2), ConstraintProfile({1, 1}, {1, 1}));
  EXPECT_EQ(r.value, 2.0);
  // flattened [0,1,1,0] is the lexicographically smallest perfect matching
  const std::vector<Arm> expected{{0, 1}, {1, 0}};
  EXPECT_EQ(r.allocation.arms(), expected);
}

TEST(BruteForce, RejectsLargeInstances) {
  EXPECT_THROW(brute_force_allocation(RewardMatrix::Ones(5, 5), ConstraintProfile({1, 1, 1, 1, 1}, {1, 1, 1, 1, 1})),
               InvalidArgument);
}

TEST(SolveExact, OracleEquivalence) {
  Rng rng(99);
  std::uniform_int_distribution<Index> rows(1, 4), cols(1, 3);
  for (int trial = 0; trial < 300; ++trial) {
    const Index n = rows(rng), m = cols(rng);
    const RewardMatrix t = fixture::grid_theta(n, m, rng);
    const ConstraintProfile p = fixture::random_profile(n, m, 3, 3, rng);
    const auto exact = solve_exact(t, p);
    ASSERT_TRUE(is_feasible(exact.allocation, p));
    ASSERT_NEAR(exact.value, brute_force_allocation(t, p).value, 1e-9);
  }
}

TEST(SolveExact, OracleEquivalenceRealValued) {
  Rng rng(123);
  for (int trial = 0; trial < 200; ++trial) {
    const RewardMatrix t = fixture::uniform_theta(4, 4, -1.0, 3.0, rng);
    const ConstraintProfile p = fixture::random_profile(4, 4, 2, 2, rng);
    ASSERT_NEAR(solve_exact(t, p).value, brute_force_allocation(t, p).value, 1e-9);
  }
}

TEST(SolveExact, MonotoneInCapacityAndDemand) {
  Rng rng(17);
  std::uniform_int_distribution<Index> pick_item(0, 5), pick_user(0, 7);
  for (int trial = 0; trial < 100; ++trial) {
    const RewardMatrix t = fixture::uniform_theta(8, 6, -1.0, 5.0, rng);
    const ConstraintProfile p = fixture::random_profile(8, 6, 3, 2, rng);
    const double base = solve_exact(t, p).value;
    auto c = p.capacities();
    c[static_cast<std::size_t>(pick_item(rng))] += 1;
    EXPECT_GE(solve_exact(t, ConstraintProfile(c, p.demands())).value, base - 1e-9);
    auto d = p.demands();
    d[static_cast<std::size_t>(pick_user(rng))] += 1;
    EXPECT_GE(solve_exact(t, ConstraintProfile(p.capacities(), d)).value, base - 1e-9);
  }
}

TEST(SolveExact, LargerInstancesAreFeasible) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const RewardMatrix t = fixture::uniform_theta(50, 30, -2.0, 10.0, rng);
    const ConstraintProfile p = fixture::random_profile(50, 30, 4, 3, rng);
    const auto r = solve_exact(t, p);
    EXPECT_TRUE(is_feasible(r.allocation, p));
    EXPECT_NEAR(r.value, allocation_value(r.allocation, t), 1e-9);
  }
}

TEST(BestResponse, Examples) {
  const PriceVector zero2(2);
  EXPECT_EQ(user_best_response(Eigen::Vector2d(3, 1), zero2, 0), bits({0, 0}));
  EXPECT_EQ(user_best_response(Eigen::Vector2d(3, 1), zero2, 1), bits({1, 0}));
  EXPECT_EQ(user_best_response(Eigen::Vector3d(3, 5, 2), PriceVector(Eigen::Vector3d(1, 4, 0)), 2),
            bits({1, 0, 1}));
}

TEST(BestResponse, SkipsNonPositiveAdjustedValues) {
  EXPECT_EQ(user_best_response(Eigen::Vector3d(1, 2, 3), PriceVector(Eigen::Vector3d(1, 3, 0)), 3),
            bits({0, 0, 1}));
}

TEST(BestResponse, AtMostDemand) {
  Rng rng(8);
  std::uniform_int_distribution<std::int64_t> dem(0, 6);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd row = fixture::uniform_theta(5, 1, -1.0, 4.0, rng).col(0);
    const Eigen::VectorXd lam = fixture::uniform_theta(5, 1, 0.0, 2.0, rng).col(0);
    const auto d = dem(rng);
    const auto x = user_best_response(row, PriceVector(lam), d);
    EXPECT_LE(std::count(x.begin(), x.end(), 1), d);
  }
}

TEST(BestResponse, LengthMismatch) {
  EXPECT_THROW(user_best_response(Eigen::Vector2d(1, 1), PriceVector(3), 1), InvalidArgument);
}

TEST(PriceVectorTest, RejectsNegative) { EXPECT_THROW(PriceVector(Eigen::Vector2d(1, -1)), InvalidArgument); }

TEST(Dual, AbundantCapacityConvergesAtZeroPrices) {
  Rng rng(4);
  const RewardMatrix t = fixture::uniform_theta(6, 4, 0.0, 5.0, rng);
  const ConstraintProfile p({6, 6, 6, 6}, {2, 2, 2, 2, 2, 2});
  const auto r = dual_price_iteration(t, p, DualOptions::for_bound(5.0));
  EXPECT_TRUE(r.converged);
  EXPECT_FALSE(r.repaired);
  EXPECT_EQ(r.prices.values().maxCoeff(), 0.0);
  for (Index u = 0; u < 6; ++u) {
    const auto x = user_best_response(t.row(u).transpose(), PriceVector(4), 2);
    for (Index i = 0; i < 4; ++i) EXPECT_EQ(r.allocation(u, i), x[static_cast<std::size_t>(i)] == 1);
  }
  EXPECT_NEAR(r.primal_value, solve_exact(t, p).value, 1e-9);
}

TEST(Dual, ThreeByTwo) {
  DualOptions o;
  o.step_size = 0.1;
  o.max_iters = 5000;
  const auto r = dual_price_iteration(theta_3x2(), kProfile3x2, o);
  EXPECT_TRUE(is_feasible(r.allocation, kProfile3x2));
  if (r.repaired)
    EXPECT_EQ(r.primal_value, 9.0);
  else
    EXPECT_NEAR(r.primal_value, 9.0, 1e-6);
  EXPECT_LE(r.primal_value, r.dual_value + 1e-6);
}

TEST(Dual, WeakDualityOnRandomInstances) {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const RewardMatrix t = fixture::uniform_theta(10, 6, 0.0, 10.0, rng);
    const ConstraintProfile p = fixture::random_profile(10, 6, 3, 2, rng);
    const auto r = dual_price_iteration(t, p, DualOptions::for_bound(10.0));
    const double opt = solve_exact(t, p).value;
    EXPECT_TRUE(is_feasible(r.allocation, p));
    EXPECT_GE(r.dual_value, opt - 1e-6);
    EXPECT_LE(r.primal_value, opt + 1e-9);
    EXPECT_LE(r.primal_value, r.dual_value + 1e-6);
  }
}

TEST(Dual, DualBoundHoldsForAnyPrices) {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const RewardMatrix t = fixture::uniform_theta(6, 4, -1.0, 6.0, rng);
    const ConstraintProfile p = fixture::random_profile(6, 4, 3, 2, rng);
    const PriceVector lam(Eigen::VectorXd(fixture::uniform_theta(4, 1, 0.0, 8.0, rng).col(0)));
    EXPECT_GE(detail::best_responses(t, p, lam).lagrangian, solve_exact(t, p).value - 1e-6);
  }
}

TEST(Dual, RejectsNonPositiveStep) {
  DualOptions o;
  o.step_size = 0.0;
  EXPECT_THROW(dual_price_iteration(theta_3x2(), kProfile3x2, o), InvalidArgument);
}

TEST(Dual, LargeToleranceStillFeasible) {
  DualOptions o;
  o.tol = 5.0;
  o.step_size = 1e-3;  // prices stay below theta, so all four users keep requesting the item
  const auto r = dual_price_iteration(RewardMatrix::Ones(4, 1), ConstraintProfile({1}, {1, 1, 1, 1}), o);
  EXPECT_TRUE(r.repaired);
  EXPECT_EQ(r.allocation.count(), 1);
}
