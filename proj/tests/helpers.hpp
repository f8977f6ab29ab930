#pragma once

#include <random>
#include <vector>

#include "lrcomb/lrcomb.hpp"

namespace lrcomb::fixture {

// Entries drawn from {-1, 0, ..., 4} * 0.5.
inline RewardMatrix grid_theta(Index n, Index m, Rng& rng) {
  std::uniform_int_distribution<int> pick(-1, 4);
  RewardMatrix t(n, m);
  for (Index u = 0; u < n; ++u)
    for (Index i = 0; i < m; ++i) t(u, i) = 0.5 * pick(rng);
  return t;
}

inline RewardMatrix uniform_theta(Index n, Index m, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> unif(lo, hi);
  RewardMatrix t(n, m);
  for (Index u = 0; u < n; ++u)
    for (Index i = 0; i < m; ++i) t(u, i) = unif(rng);
  return t;
}

inline ConstraintProfile random_profile(Index n, Index m, std::int64_t max_cap, std::int64_t max_demand, Rng& rng) {
  std::uniform_int_distribution<std::int64_t> cap(0, max_cap), dem(0, max_demand);
  std::vector<std::int64_t> c(static_cast<std::size_t>(m)), d(static_cast<std::size_t>(n));
  for (auto& v : c) v = cap(rng);
  for (auto& v : d) v = dem(rng);
  return ConstraintProfile(c, d);
}

inline RewardMatrix low_rank(Index n, Index m, Index rank, Rng& rng) {
  const Eigen::MatrixXd p = uniform_theta(n, rank, 0.0, 1.0, rng);
  const Eigen::MatrixXd q = uniform_theta(m, rank, 0.0, 1.0, rng);
  return p * q.transpose();
}

inline bool is_binary_and_feasible(const AllocationMatrix& x, const ConstraintProfile& p) {
  return is_feasible(x, p);  // storage is binary by construction
}

}  // namespace lrcomb::fixture
