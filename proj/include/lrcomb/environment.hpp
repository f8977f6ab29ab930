#pragma once

// Ground-truth reward world: synthetic low-rank generation, Gaussian reward
// sampling, capacity/demand dynamics and the capacity-drop rule.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "lrcomb/core.hpp"
#include "lrcomb/lowrank.hpp"

namespace lrcomb {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed of stream `index` under `master`: master XOR mix64(index), mixed once more.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(master ^ mix64(index));
}

enum class Dynamics { Static, Dynamic };

struct WorldConfig {
  Index n_users = 0;
  Index n_items = 0;
  Index rank = 1;
  double B = 10.0;
  double eta = 1.0;
  Dynamics dynamics = Dynamics::Static;
  double p_active = 0.2;
  // C_max: 0 selects the ceil(3 sum(d) / M) rule, a positive value fixes it.
  std::int64_t c_max_fixed = 0;
  bool include_zero_capacity = false;
  double theta_noise = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(n_users > 0 && n_items > 0 && rank > 0, "world dimensions must be positive");
    detail::require(B > 0.0 && eta >= 0.0, "world needs B > 0 and eta >= 0");
    detail::require(p_active >= 0.0 && p_active <= 1.0, "p_active must lie in [0,1]");
    detail::require(c_max_fixed >= 0, "fixed C_max must be >= 0");
    detail::require(theta_noise >= 0.0, "theta_noise must be >= 0");
  }
};

/// Theta* = P Q^T with P, Q i.i.d. uniform[0,1], rescaled so the largest
/// entry equals B. Optional additive Gaussian perturbation (clipped at 0)
/// gives an approximately low-rank matrix.
inline RewardMatrix gen_synthetic_theta(const WorldConfig& cfg, Rng& rng) {
  cfg.validate();
  detail::require(cfg.rank <= std::min(cfg.n_users, cfg.n_items), "rank ", cfg.rank, " exceeds min(N, M)");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd p(cfg.n_users, cfg.rank), q(cfg.n_items, cfg.rank);
  for (Index u = 0; u < cfg.n_users; ++u)
    for (Index r = 0; r < cfg.rank; ++r) p(u, r) = unif(rng);
  for (Index i = 0; i < cfg.n_items; ++i)
    for (Index r = 0; r < cfg.rank; ++r) q(i, r) = unif(rng);
  RewardMatrix theta = p * q.transpose();
  if (cfg.theta_noise > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.theta_noise * theta.maxCoeff());
    for (Index u = 0; u < theta.rows(); ++u)
      for (Index i = 0; i < theta.cols(); ++i) theta(u, i) = std::max(0.0, theta(u, i) + noise(rng));
  }
  const double top = theta.maxCoeff();
  detail::require(top > 0.0, "degenerate synthetic matrix");
  theta *= cfg.B / top;
  return theta;
}

inline std::int64_t capacity_ceiling(const WorldConfig& cfg, std::int64_t total_demand) {
  if (cfg.c_max_fixed > 0) return cfg.c_max_fixed;
  const std::int64_t m = cfg.n_items;
  const std::int64_t rule = (3 * total_demand + m - 1) / m;  // ceil(3 sum(d) / M)
  return std::max<std::int64_t>(1, rule);
}

namespace detail {

inline std::vector<std::int64_t> sample_capacities(const WorldConfig& cfg, std::int64_t c_max, Rng& rng) {
  std::uniform_int_distribution<std::int64_t> dist(cfg.include_zero_capacity ? 0 : 1, c_max);
  std::vector<std::int64_t> c(static_cast<std::size_t>(cfg.n_items));
  for (auto& v : c) v = dist(rng);
  return c;
}

}  // namespace detail

/// Static worlds: every user demands one item and the capacities are drawn
/// once from cfg.seed, so every round (and every call) sees the same profile.
/// Dynamic worlds: d_u ~ Bernoulli(p_active), then c_i ~ U{1..C_max} with
/// C_max = ceil(3 sum(d) / M), fresh each round from `rng`.
inline ConstraintProfile sample_constraints(const WorldConfig& cfg, Rng& rng, std::int64_t /*t*/) {
  cfg.validate();
  if (cfg.dynamics == Dynamics::Static) {
    Rng own(derive_seed(cfg.seed, 0x5747));
    std::vector<std::int64_t> d(static_cast<std::size_t>(cfg.n_users), 1);
    const std::int64_t c_max = capacity_ceiling(cfg, cfg.n_users);
    return ConstraintProfile(detail::sample_capacities(cfg, c_max, own), std::move(d));
  }
  std::bernoulli_distribution active(cfg.p_active);
  std::vector<std::int64_t> d(static_cast<std::size_t>(cfg.n_users));
  std::int64_t total = 0;
  for (auto& v : d) {
    v = active(rng) ? 1 : 0;
    total += v;
  }
  const std::int64_t c_max = capacity_ceiling(cfg, total);
  return ConstraintProfile(detail::sample_capacities(cfg, c_max, rng), std::move(d));
}

struct ArmReward {
  Index user = 0;
  Index item = 0;
  double reward = 0.0;
};

/// One N(theta*_ui, eta^2) draw per allocated pair, user-major order.
inline std::vector<ArmReward> sample_rewards(const RewardMatrix& theta_star, const AllocationMatrix& x, double eta,
                                             Rng& rng) {
  require_shape(x, theta_star);
  detail::require(eta >= 0.0, "eta must be >= 0");
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<ArmReward> out;
  for (const Arm& a : x.arms()) {
    const double mean = theta_star(a.user, a.item);
    out.push_back({a.user, a.item, eta > 0.0 ? mean + eta * noise(rng) : mean});
  }
  return out;
}

struct DropResult {
  AllocationMatrix realized;
  std::vector<Arm> dropped;
};

/// Serves a uniformly random subset of c_i requesters for every
/// over-subscribed item; the remaining requests are dropped.
inline DropResult apply_capacity_drop(const AllocationMatrix& requested, const ConstraintProfile& p, Rng& rng) {
  require_shape(requested, p);
  DropResult out{requested, {}};
  std::vector<Index> requesters;
  for (Index i = 0; i < requested.n_items(); ++i) {
    requesters.clear();
    for (Index u = 0; u < requested.n_users(); ++u)
      if (requested(u, i)) requesters.push_back(u);
    const auto keep = static_cast<std::size_t>(p.capacity(i));
    if (requesters.size() <= keep) continue;
    // Partial Fisher-Yates: the first `keep` slots become a uniform subset.
    for (std::size_t k = 0; k < keep; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, requesters.size() - 1);
      std::swap(requesters[k], requesters[pick(rng)]);
    }
    for (std::size_t k = keep; k < requesters.size(); ++k) {
      out.realized.set(requesters[k], i, false);
      out.dropped.push_back({requesters[k], i});
    }
  }
  std::sort(out.dropped.begin(), out.dropped.end());
  return out;
}

}  // namespace lrcomb
