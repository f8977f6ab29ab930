#pragma once

// Exact and price-based solvers for the capacity/demand constrained
// allocation problem  max <X, Theta>  s.t.  X 1 <= d,  X^T 1 <= c,  X binary.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <utility>
#include <vector>

#include "lrcomb/core.hpp"

namespace lrcomb {

struct AllocationResult {
  AllocationMatrix allocation;
  double value = 0.0;
};

namespace detail {

// Successive shortest augmenting paths with Johnson potentials on the
// transportation network  source -> users -> items -> sink.
class MinCostFlow {
 public:
  static constexpr double kCostTol = 1e-12;

  explicit MinCostFlow(int n_nodes) : graph_(static_cast<std::size_t>(n_nodes)) {}

  int add_edge(int from, int to, std::int64_t cap, double cost) {
    auto& f = graph_[static_cast<std::size_t>(from)];
    auto& t = graph_[static_cast<std::size_t>(to)];
    f.push_back({to, static_cast<int>(t.size()), cap, cost});
    t.push_back({from, static_cast<int>(f.size()) - 1, 0, -cost});
    return static_cast<int>(f.size()) - 1;
  }

  std::int64_t residual(int from, int edge) const {
    return graph_[static_cast<std::size_t>(from)][static_cast<std::size_t>(edge)].cap;
  }

  // Augments while the cheapest residual path has negative cost. `initial`
  // must be valid shortest-path potentials for the initial residual graph.
  void run(int source, int sink, std::vector<double> potential) {
    const std::size_t n = graph_.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(n);
    std::vector<int> prev_node(n), prev_edge(n);
    std::vector<char> done(n);
    using Entry = std::pair<double, int>;

    for (;;) {
      std::fill(dist.begin(), dist.end(), inf);
      std::fill(done.begin(), done.end(), 0);
      std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
      dist[static_cast<std::size_t>(source)] = 0.0;
      heap.emplace(0.0, source);
      while (!heap.empty()) {
        const auto [d, v] = heap.top();
        heap.pop();
        const auto vs = static_cast<std::size_t>(v);
        if (done[vs]) continue;
        done[vs] = 1;
        const auto& edges = graph_[vs];
        for (std::size_t k = 0; k < edges.size(); ++k) {
          const Edge& e = edges[k];
          if (e.cap <= 0) continue;
          const auto ts = static_cast<std::size_t>(e.to);
          if (done[ts]) continue;
          // Reduced costs are nonnegative up to rounding.
          const double reduced = std::max(0.0, e.cost + potential[vs] - potential[ts]);
          const double nd = d + reduced;
          if (nd + kCostTol < dist[ts]) {
            dist[ts] = nd;
            prev_node[ts] = v;
            prev_edge[ts] = static_cast<int>(k);
            heap.emplace(nd, e.to);
          }
        }
      }
      const auto ss = static_cast<std::size_t>(sink);
      if (dist[ss] == inf) break;
      const double path_cost = dist[ss] + potential[ss] - potential[static_cast<std::size_t>(source)];
      if (path_cost >= -kCostTol) break;

      for (std::size_t v = 0; v < n; ++v)
        if (dist[v] < inf) potential[v] += dist[v];

      std::int64_t push = std::numeric_limits<std::int64_t>::max();
      for (int v = sink; v != source; v = prev_node[static_cast<std::size_t>(v)]) {
        const auto& e = graph_[static_cast<std::size_t>(prev_node[static_cast<std::size_t>(v)])]
                              [static_cast<std::size_t>(prev_edge[static_cast<std::size_t>(v)])];
        push = std::min(push, e.cap);
      }
      for (int v = sink; v != source; v = prev_node[static_cast<std::size_t>(v)]) {
        auto& e = graph_[static_cast<std::size_t>(prev_node[static_cast<std::size_t>(v)])]
                        [static_cast<std::size_t>(prev_edge[static_cast<std::size_t>(v)])];
        e.cap -= push;
        graph_[static_cast<std::size_t>(e.to)][static_cast<std::size_t>(e.rev)].cap += push;
      }
    }
  }

 private:
  struct Edge {
    int to;
    int rev;
    std::int64_t cap;
    double cost;
  };
  std::vector<std::vector<Edge>> graph_;
};

}  // namespace detail

/// Exact maximizer of <X, Theta> over the feasible set, via min-cost flow.
/// Pairs with theta <= 0 are never allocated.
inline AllocationResult solve_exact(const RewardMatrix& theta, const ConstraintProfile& p) {
  require_shape(theta, p);
  check_finite(theta);
  const Index n = theta.rows();
  const Index m = theta.cols();
  const int source = 0;
  const int sink = static_cast<int>(n + m + 1);
  auto user_node = [](Index u) { return static_cast<int>(1 + u); };
  auto item_node = [n](Index i) { return static_cast<int>(1 + n + i); };

  detail::MinCostFlow flow(static_cast<int>(n + m + 2));
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> potential(static_cast<std::size_t>(n + m + 2), inf);
  potential[0] = 0.0;

  // edge_index[u][i] = position of the u->i edge in u's adjacency list, or -1.
  std::vector<std::vector<int>> edge_index(static_cast<std::size_t>(n),
                                           std::vector<int>(static_cast<std::size_t>(m), -1));
  for (Index u = 0; u < n; ++u) {
    if (p.demand(u) <= 0) continue;
    flow.add_edge(source, user_node(u), p.demand(u), 0.0);
    potential[static_cast<std::size_t>(user_node(u))] = 0.0;
  }
  for (Index u = 0; u < n; ++u) {
    if (p.demand(u) <= 0) continue;
    for (Index i = 0; i < m; ++i) {
      if (p.capacity(i) <= 0 || !(theta(u, i) > 0.0)) continue;
      edge_index[static_cast<std::size_t>(u)][static_cast<std::size_t>(i)] =
          flow.add_edge(user_node(u), item_node(i), 1, -theta(u, i));
      auto& pi = potential[static_cast<std::size_t>(item_node(i))];
      pi = std::min(pi, -theta(u, i));
    }
  }
  double sink_potential = inf;
  for (Index i = 0; i < m; ++i) {
    if (p.capacity(i) <= 0) continue;
    flow.add_edge(item_node(i), sink, p.capacity(i), 0.0);
    sink_potential = std::min(sink_potential, potential[static_cast<std::size_t>(item_node(i))]);
  }
  potential[static_cast<std::size_t>(sink)] = sink_potential;
  // Unreachable nodes only ever need a finite placeholder.
  for (double& v : potential)
    if (v == inf) v = 0.0;

  flow.run(source, sink, std::move(potential));

  AllocationResult result{AllocationMatrix(n, m), 0.0};
  for (Index u = 0; u < n; ++u)
    for (Index i = 0; i < m; ++i) {
      const int e = edge_index[static_cast<std::size_t>(u)][static_cast<std::size_t>(i)];
      if (e >= 0 && flow.residual(user_node(u), e) == 0) result.allocation.set(u, i, true);
    }
  result.value = allocation_value(result.allocation, theta);
  return result;
}

inline constexpr Index kBruteForceMaxCells = 20;

/// Exhaustive enumeration over all binary matrices (test oracle).
/// Among maximizers, returns the lexicographically smallest flattened
/// (user-major) matrix.
inline AllocationResult brute_force_allocation(const RewardMatrix& theta, const ConstraintProfile& p) {
  require_shape(theta, p);
  const Index n = theta.rows();
  const Index m = theta.cols();
  const Index cells = n * m;
  detail::require(cells <= kBruteForceMaxCells, "instance too large for enumeration: ", cells, " cells > ",
                  kBruteForceMaxCells);

  const std::uint64_t total = std::uint64_t{1} << cells;
  std::vector<double> flat(static_cast<std::size_t>(cells));
  for (Index k = 0; k < cells; ++k) flat[static_cast<std::size_t>(k)] = theta(k / m, k % m);

  std::vector<std::int64_t> rows(static_cast<std::size_t>(n)), cols(static_cast<std::size_t>(m));
  double best = -std::numeric_limits<double>::infinity();
  std::uint64_t best_mask = 0;
  // Flattened position k maps to bit (cells-1-k): increasing masks enumerate
  // matrices in lexicographic order, so keeping the first strict improvement
  // yields the smallest maximizer.
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    std::fill(rows.begin(), rows.end(), 0);
    std::fill(cols.begin(), cols.end(), 0);
    double value = 0.0;
    bool ok = true;
    for (Index k = 0; k < cells && ok; ++k) {
      if (!((mask >> (cells - 1 - k)) & 1U)) continue;
      const auto u = static_cast<std::size_t>(k / m);
      const auto i = static_cast<std::size_t>(k % m);
      ok = ++rows[u] <= p.demands()[u] && ++cols[i] <= p.capacities()[i];
      value += flat[static_cast<std::size_t>(k)];
    }
    if (ok && value > best + 1e-12) {
      best = value;
      best_mask = mask;
    }
  }

  AllocationResult result{AllocationMatrix(n, m), 0.0};
  for (Index k = 0; k < cells; ++k)
    if ((best_mask >> (cells - 1 - k)) & 1U) result.allocation.set(k / m, k % m, true);
  result.value = allocation_value(result.allocation, theta);
  return result;
}

/// Nonnegative item prices (Lagrange multipliers of the capacity constraints).
class PriceVector {
 public:
  PriceVector() = default;
  explicit PriceVector(Index n_items) : lambda_(Eigen::VectorXd::Zero(n_items)) {}
  explicit PriceVector(Eigen::VectorXd lambda) : lambda_(std::move(lambda)) {
    detail::require((lambda_.array() >= 0.0).all() && lambda_.allFinite(), "prices must be finite and >= 0");
  }

  const Eigen::VectorXd& values() const { return lambda_; }
  double operator[](Index i) const { return lambda_(i); }
  Index size() const { return lambda_.size(); }

 private:
  Eigen::VectorXd lambda_;
};

/// A user's best response to prices: up to `demand` items with the largest
/// strictly positive theta_i - lambda_i, ties to the lowest index.
inline std::vector<std::uint8_t> user_best_response(const Eigen::VectorXd& theta_row, const PriceVector& prices,
                                                    std::int64_t demand) {
  detail::require(theta_row.size() == prices.size(), "theta row has ", theta_row.size(), " items but ",
                  prices.size(), " prices");
  detail::require(demand >= 0, "demand must be >= 0");
  const Index m = theta_row.size();
  std::vector<Index> order;
  order.reserve(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i)
    if (theta_row(i) - prices[i] > 0.0) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return theta_row(a) - prices[a] > theta_row(b) - prices[b];
  });
  std::vector<std::uint8_t> row(static_cast<std::size_t>(m), 0);
  const auto take = std::min<std::size_t>(order.size(), static_cast<std::size_t>(demand));
  for (std::size_t k = 0; k < take; ++k) row[static_cast<std::size_t>(order[k])] = 1;
  return row;
}

struct DualOptions {
  double step_size = 0.5;  // 0.05 * B for B = 10
  int max_iters = 2000;
  double tol = 0.0;
  int patience = 5;

  static DualOptions for_bound(double B) {
    DualOptions o;
    o.step_size = 0.05 * B;
    return o;
  }
};

struct DualSolveReport {
  AllocationMatrix allocation;
  PriceVector prices;
  int iterations = 0;
  bool converged = false;
  bool repaired = false;
  double dual_value = 0.0;
  double primal_value = 0.0;
};

namespace detail {

struct ResponseSet {
  AllocationMatrix allocation;
  Eigen::VectorXd load;
  double lagrangian = 0.0;  // sum_u max response value + lambda^T c
};

inline ResponseSet best_responses(const RewardMatrix& theta, const ConstraintProfile& p, const PriceVector& prices) {
  const Index n = theta.rows();
  const Index m = theta.cols();
  ResponseSet out{AllocationMatrix(n, m), Eigen::VectorXd::Zero(m), 0.0};
  for (Index u = 0; u < n; ++u) {
    const Eigen::VectorXd row = theta.row(u).transpose();
    const auto x = user_best_response(row, prices, p.demand(u));
    for (Index i = 0; i < m; ++i) {
      if (!x[static_cast<std::size_t>(i)]) continue;
      out.allocation.set(u, i, true);
      out.load(i) += 1.0;
      out.lagrangian += theta(u, i) - prices[i];
    }
  }
  for (Index i = 0; i < m; ++i) out.lagrangian += prices[i] * static_cast<double>(p.capacity(i));
  return out;
}

}  // namespace detail

/// Dual decomposition: users best-respond to item prices and the provider
/// runs projected subgradient steps  lambda <- [lambda - step (c - load)]^+.
/// Falls back to solve_exact (repaired = true) when the loop does not reach a
/// feasible aggregate allocation within max_iters.
inline DualSolveReport dual_price_iteration(const RewardMatrix& theta, const ConstraintProfile& p,
                                            const DualOptions& opts = {}) {
  require_shape(theta, p);
  check_finite(theta);
  detail::require(opts.step_size > 0.0, "step_size must be > 0");
  detail::require(opts.max_iters > 0, "max_iters must be > 0");
  detail::require(opts.tol >= 0.0, "tol must be >= 0");
  detail::require(opts.patience >= 1, "patience must be >= 1");

  const Index m = theta.cols();
  Eigen::VectorXd cap(m);
  for (Index i = 0; i < m; ++i) cap(i) = static_cast<double>(p.capacity(i));

  DualSolveReport report;
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
  int streak = 0;
  detail::ResponseSet current;
  for (int it = 0; it < opts.max_iters; ++it) {
    current = detail::best_responses(theta, p, PriceVector(lambda));
    report.iterations = it + 1;
    const double violation = m > 0 ? (current.load - cap).maxCoeff() : 0.0;
    streak = violation <= opts.tol ? streak + 1 : 0;
    if (streak >= opts.patience) {
      report.converged = true;
      break;
    }
    lambda = (lambda - opts.step_size * (cap - current.load)).cwiseMax(0.0);
  }

  report.prices = PriceVector(lambda);
  // A tolerance >= 1 can accept an over-subscribed item; repair that too.
  if (report.converged && is_feasible(current.allocation, p)) {
    report.allocation = current.allocation;
    report.dual_value = current.lagrangian;
  } else {
    report.dual_value = detail::best_responses(theta, p, report.prices).lagrangian;
    report.allocation = solve_exact(theta, p).allocation;
    report.repaired = true;
  }
  report.primal_value = allocation_value(report.allocation, theta);
  return report;
}

}  // namespace lrcomb
