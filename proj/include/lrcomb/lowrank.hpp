#pragma once

// Low-rank reward estimation: regularized alternating least squares,
// confidence radii, and the optimistic (OFU) allocation step.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "lrcomb/alloc_solver.hpp"
#include "lrcomb/core.hpp"

namespace lrcomb {

using Rng = std::mt19937_64;

/// sum_{u,i} (n_ui + gamma) * delta_ui^2
inline double empirical_norm_sq(const Eigen::MatrixXd& delta, const CountMatrix& counts, double gamma) {
  detail::require(delta.rows() == counts.rows() && delta.cols() == counts.cols(), "shape mismatch: delta is ",
                  delta.rows(), "x", delta.cols(), ", counts are ", counts.rows(), "x", counts.cols());
  detail::require(gamma >= 0.0, "gamma must be >= 0");
  return ((counts.cast<double>().array() + gamma) * delta.array().square()).sum();
}

/// Upper bound on the log alpha-covering number (Frobenius norm) of rank-R
/// N x M matrices with entries in [0, B], clamped at zero.
inline double covering_log_bound(Index n, Index m, Index rank, double B, double alpha) {
  detail::require(n > 0 && m > 0 && rank > 0 && B > 0.0 && alpha > 0.0,
                  "covering_log_bound arguments must be positive");
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(m);
  const double v = (nd + md + 1.0) * static_cast<double>(rank) * std::log(9.0 * B * std::sqrt(nd * md) / alpha);
  return std::max(0.0, v);
}

/// Theoretical confidence radius (squared) at round t:
///   8 eta^2 log(N_cover / delta) + 2 alpha t N M [8 B + sqrt(8 eta^2 log(4 N M t^2 / delta))] + 4 gamma G^2.
/// B = 0 is accepted as the degenerate single-point structure set.
inline double beta_star(const Hyperparams& hp, std::int64_t t, Index n, Index m) {
  detail::require(t >= 1, "round index must be >= 1");
  detail::require(n > 0 && m > 0, "dimensions must be positive");
  detail::require(hp.eta >= 0.0 && hp.B >= 0.0 && hp.G >= 0.0, "eta, B, G must be >= 0");
  detail::require(hp.gamma > 0.0, "gamma must be > 0");
  detail::require(hp.delta > 0.0 && hp.delta < 1.0, "delta must lie in (0,1)");
  detail::require(hp.alpha_cover > 0.0 && hp.rank >= 1, "alpha_cover must be > 0 and rank >= 1");

  const double nm = static_cast<double>(n) * static_cast<double>(m);
  const double td = static_cast<double>(t);
  const double eta2 = hp.eta * hp.eta;
  const double log_cover = hp.B > 0.0 ? covering_log_bound(n, m, hp.rank, hp.B, hp.alpha_cover) : 0.0;
  const double noise = 8.0 * eta2 * (log_cover - std::log(hp.delta));
  const double discretization =
      2.0 * hp.alpha_cover * td * nm *
      (8.0 * hp.B + std::sqrt(8.0 * eta2 * std::log(4.0 * nm * td * td / hp.delta)));
  const double prior = 4.0 * hp.gamma * hp.G * hp.G;
  return noise + discretization + prior;
}

/// Radius used in simulations: kappa^2 eta^2 ln(N M t).
inline double practical_beta(double kappa, double eta, Index n, Index m, std::int64_t t) {
  detail::require(t >= 1 && n > 0 && m > 0, "practical_beta: invalid round or dimensions");
  return kappa * kappa * eta * eta * std::log(static_cast<double>(n) * static_cast<double>(m) * static_cast<double>(t));
}

struct FactorPair {
  Eigen::MatrixXd P;  // N x R user factors
  Eigen::MatrixXd Q;  // M x R item factors

  Index rank() const { return P.cols(); }
  RewardMatrix product() const { return P * Q.transpose(); }
};

/// Entries i.i.d. uniform on [0, sqrt(B / R)].
inline FactorPair random_factors(Index n, Index m, Index rank, double B, Rng& rng) {
  std::uniform_real_distribution<double> dist(0.0, std::sqrt(B / static_cast<double>(rank)));
  FactorPair f{Eigen::MatrixXd(n, rank), Eigen::MatrixXd(m, rank)};
  for (Index r = 0; r < rank; ++r)
    for (Index u = 0; u < n; ++u) f.P(u, r) = dist(rng);
  for (Index r = 0; r < rank; ++r)
    for (Index i = 0; i < m; ++i) f.Q(i, r) = dist(rng);
  return f;
}

/// Ellipsoid { Theta : ||Theta - center||_{2,E} <= sqrt(beta) }.
struct ConfidenceSpec {
  RewardMatrix center;
  CountMatrix counts;
  double gamma = 1.0;
  double beta = 0.0;

  void validate() const {
    detail::require(beta >= 0.0 && std::isfinite(beta), "beta must be finite and >= 0");
    detail::require(gamma > 0.0, "gamma must be > 0");
    detail::require(center.rows() == counts.rows() && center.cols() == counts.cols(),
                    "confidence center and counts differ in shape");
  }

  Eigen::MatrixXd weights() const { return counts.cast<double>().array() + gamma; }
};

inline RewardMatrix project_to_confidence(const RewardMatrix& theta, const ConfidenceSpec& spec) {
  spec.validate();
  detail::require(theta.rows() == spec.center.rows() && theta.cols() == spec.center.cols(),
                  "project_to_confidence: shape mismatch");
  const Eigen::MatrixXd diff = theta - spec.center;
  const double norm = std::sqrt(empirical_norm_sq(diff, spec.counts, spec.gamma));
  const double radius = std::sqrt(spec.beta);
  if (norm <= radius) return theta;
  return spec.center + (radius / norm) * diff;
}

// ---------------------------------------------------------------------------
// Regularized least squares over rank-R factorizations.

struct AlsOptions {
  int max_sweeps = 100;
  double rel_tol = 1e-6;
  double jitter = 1e-10;
};

struct AlsResult {
  FactorPair factors;
  RewardMatrix estimate;           // P Q^T clipped to [0, B]
  std::vector<double> objective;   // initial value, then one entry per sweep
};

namespace detail {

// Per-arm statistics of the least-squares objective
//   sum_records (theta_ui - r)^2 + gamma ||Theta - theta_bar||_F^2
//   = sum_ui [ n_ui (theta_ui - mean_ui)^2 + gamma (theta_ui - bar_ui)^2 ] + within-arm scatter.
struct LeastSquaresStats {
  Eigen::MatrixXd counts;
  Eigen::MatrixXd means;
  Eigen::MatrixXd weights;  // n + gamma
  Eigen::MatrixXd rhs;      // sums + gamma * bar  (= weights * weighted target)
  double scatter = 0.0;

  LeastSquaresStats(const ObservationLog& log, double gamma, const RewardMatrix& theta_bar)
      : counts(log.counts().cast<double>()),
        means(Eigen::MatrixXd::Zero(log.n_users(), log.n_items())),
        weights(counts.array() + gamma),
        rhs(log.sums() + gamma * theta_bar) {
    for (Index u = 0; u < counts.rows(); ++u)
      for (Index i = 0; i < counts.cols(); ++i) {
        const double c = counts(u, i);
        if (c <= 0.0) continue;
        means(u, i) = log.sums()(u, i) / c;
        scatter += std::max(0.0, log.sum_squares()(u, i) - c * means(u, i) * means(u, i));
      }
  }
};

// Rows of `out` solve min_x sum_k w(row,k) (x . fixed_k)^2 - 2 rhs(row,k) (x . fixed_k).
inline void solve_rows(const Eigen::MatrixXd& fixed, const Eigen::MatrixXd& weights, const Eigen::MatrixXd& rhs,
                       double jitter, Eigen::MatrixXd& out) {
  const Index rank = fixed.cols();
  out.resize(weights.rows(), rank);
  for (Index row = 0; row < weights.rows(); ++row) {
    Eigen::MatrixXd gram = fixed.transpose() * weights.row(row).transpose().asDiagonal() * fixed;
    const Eigen::VectorXd b = fixed.transpose() * rhs.row(row).transpose();
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) {
      gram.diagonal().array() += jitter;
      llt.compute(gram);
    }
    out.row(row) = llt.solve(b).transpose();
  }
}

inline double least_squares_objective(const Eigen::MatrixXd& theta, const LeastSquaresStats& s, double gamma,
                                      const RewardMatrix& theta_bar) {
  return (s.counts.array() * (theta - s.means).array().square()).sum() +
         gamma * (theta - theta_bar).squaredNorm() + s.scatter;
}

}  // namespace detail

/// Objective  sum_records (p_u^T q_i - r)^2 + gamma ||P Q^T - theta_bar||_F^2.
inline double als_objective(const FactorPair& f, const ObservationLog& log, double gamma,
                            const RewardMatrix& theta_bar) {
  const detail::LeastSquaresStats stats(log, gamma, theta_bar);
  return detail::least_squares_objective(f.product(), stats, gamma, theta_bar);
}

/// Gradient of als_objective with respect to P.
inline Eigen::MatrixXd als_gradient_p(const FactorPair& f, const ObservationLog& log, double gamma,
                                      const RewardMatrix& theta_bar) {
  const detail::LeastSquaresStats stats(log, gamma, theta_bar);
  const Eigen::MatrixXd theta = f.product();
  const Eigen::MatrixXd d_theta =
      2.0 * (stats.counts.array() * (theta - stats.means).array() + gamma * (theta - theta_bar).array()).matrix();
  return d_theta * f.Q;
}

/// Alternating minimization of the regularized least-squares objective; each
/// half-step is an exact row-wise ridge solve, so the objective never rises.
inline AlsResult als_least_squares(const ObservationLog& log, const Hyperparams& hp, const RewardMatrix& theta_bar,
                                   FactorPair init, const AlsOptions& opts = {}) {
  hp.validate();
  const Index n = log.n_users();
  const Index m = log.n_items();
  detail::require(hp.rank <= std::min(n, m), "rank ", hp.rank, " exceeds min(N, M) = ", std::min(n, m));
  detail::require(theta_bar.rows() == n && theta_bar.cols() == m, "theta_bar shape mismatch");
  detail::require(init.P.rows() == n && init.Q.rows() == m && init.P.cols() == hp.rank && init.Q.cols() == hp.rank,
                  "initial factors do not match N, M, R");

  const detail::LeastSquaresStats stats(log, hp.gamma, theta_bar);
  AlsResult result;
  result.factors = std::move(init);
  FactorPair& f = result.factors;
  double prev = detail::least_squares_objective(f.product(), stats, hp.gamma, theta_bar);
  result.objective.push_back(prev);

  const Eigen::MatrixXd weights_t = stats.weights.transpose();
  const Eigen::MatrixXd rhs_t = stats.rhs.transpose();
  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    detail::solve_rows(f.Q, stats.weights, stats.rhs, opts.jitter, f.P);
    detail::solve_rows(f.P, weights_t, rhs_t, opts.jitter, f.Q);
    const double cur = detail::least_squares_objective(f.product(), stats, hp.gamma, theta_bar);
    result.objective.push_back(cur);
    const double scale = std::max(std::abs(prev), std::numeric_limits<double>::min());
    if ((prev - cur) / scale < opts.rel_tol) break;
    prev = cur;
  }
  result.estimate = f.product().cwiseMax(0.0).cwiseMin(hp.B);
  return result;
}

inline AlsResult als_least_squares(const ObservationLog& log, const Hyperparams& hp, const RewardMatrix& theta_bar,
                                   Rng& rng, const AlsOptions& opts = {}) {
  hp.validate();
  detail::require(hp.rank <= std::min(log.n_users(), log.n_items()), "rank ", hp.rank, " exceeds min(N, M)");
  return als_least_squares(log, hp, theta_bar, random_factors(log.n_users(), log.n_items(), hp.rank, hp.B, rng),
                           opts);
}

// ---------------------------------------------------------------------------
// Optimistic allocation:  max_{X feasible} max_{Theta in C} <X, Theta>.

enum class OptimismMode { Fast, Alternating };

struct OptimisticResult {
  AllocationMatrix allocation;
  RewardMatrix theta_tilde;
  double objective = 0.0;  // <allocation, theta_tilde>
  int iterations = 0;
};

namespace detail {

inline constexpr int kOptimismMaxIters = 50;

// Maximizer of <X, Theta> over the ellipsoid for a fixed X:
//   Theta = center + sqrt(beta) * (X / W) / ||X||_{E^-1},  ||X||^2_{E^-1} = sum_X 1 / W.
inline RewardMatrix ellipsoid_maximizer(const AllocationMatrix& x, const RewardMatrix& center,
                                        const Eigen::MatrixXd& weights, double beta) {
  Eigen::MatrixXd tilt = x.as_real().cwiseQuotient(weights);
  const double norm = std::sqrt(tilt.sum());
  if (norm <= 0.0 || beta <= 0.0) return center;
  return center + (std::sqrt(beta) / norm) * tilt;
}

// Fixed-point alternation X -> Theta(X) -> solve_exact(Theta(X)) until X repeats.
inline OptimisticResult fast_from(AllocationMatrix x, const ConfidenceSpec& spec, const Eigen::MatrixXd& weights,
                                  const ConstraintProfile& p) {
  OptimisticResult out;
  for (int it = 0; it < kOptimismMaxIters; ++it) {
    out.iterations = it + 1;
    const RewardMatrix tilted = ellipsoid_maximizer(x, spec.center, weights, spec.beta);
    AllocationMatrix next = solve_exact(tilted, p).allocation;
    const bool repeated = next == x;
    x = std::move(next);
    if (repeated) break;
  }
  out.theta_tilde = ellipsoid_maximizer(x, spec.center, weights, spec.beta);
  out.objective = allocation_value(x, out.theta_tilde);
  out.allocation = std::move(x);
  return out;
}

// Exact maximizer over one factor block, the other block held fixed:
//   max sum_l x_l^T (F b_l)  s.t.  sum_{l,k} W_lk (b_l . f_k - T_lk)^2 <= beta.
// The constraint is a convex quadratic in the free block, so the solution is
// the weighted least-squares fit plus a step along H^-1 g to the boundary.
inline Eigen::MatrixXd maximize_block(const Eigen::MatrixXd& fixed, const Eigen::MatrixXd& weights,
                                      const Eigen::MatrixXd& target, const Eigen::MatrixXd& x, double beta,
                                      const Eigen::MatrixXd& current, double jitter) {
  const Index rows = weights.rows();
  const Index rank = fixed.cols();
  Eigen::MatrixXd fit(rows, rank), step(rows, rank);
  double residual = 0.0;
  double curvature = 0.0;
  for (Index l = 0; l < rows; ++l) {
    Eigen::MatrixXd h = fixed.transpose() * weights.row(l).transpose().asDiagonal() * fixed;
    Eigen::LLT<Eigen::MatrixXd> llt(h);
    if (llt.info() != Eigen::Success) {
      h.diagonal().array() += jitter;
      llt.compute(h);
    }
    const Eigen::VectorXd b = fixed.transpose() * weights.row(l).cwiseProduct(target.row(l)).transpose();
    const Eigen::VectorXd g = fixed.transpose() * x.row(l).transpose();
    fit.row(l) = llt.solve(b).transpose();
    const Eigen::VectorXd s = llt.solve(g);
    step.row(l) = s.transpose();
    curvature += g.dot(s);
    const Eigen::RowVectorXd err = fit.row(l) * fixed.transpose() - target.row(l);
    residual += (weights.row(l).array() * err.array().square()).sum();
  }
  const double slack = beta - residual;
  if (slack < 0.0) return fit;
  if (curvature <= 0.0) return current;
  return fit + std::sqrt(slack / curvature) * step;
}

inline FactorPair factor_by_svd(const RewardMatrix& theta, Index rank) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(theta, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd root = svd.singularValues().head(rank).cwiseSqrt();
  return {svd.matrixU().leftCols(rank) * root.asDiagonal(), svd.matrixV().leftCols(rank) * root.asDiagonal()};
}

inline OptimisticResult alternating(const ConfidenceSpec& spec, const Eigen::MatrixXd& weights,
                                    const ConstraintProfile& p, FactorPair f) {
  constexpr int kInnerIters = 20;
  constexpr double kJitter = 1e-10;
  const Eigen::MatrixXd weights_t = weights.transpose();
  const Eigen::MatrixXd center_t = spec.center.transpose();

  AllocationMatrix x = AllocationMatrix::all_ones(spec.center.rows(), spec.center.cols());
  OptimisticResult out;
  double prev = -std::numeric_limits<double>::infinity();
  for (int outer = 0; outer < kOptimismMaxIters; ++outer) {
    out.iterations = outer + 1;
    const Eigen::MatrixXd xr = x.as_real();
    const Eigen::MatrixXd xr_t = xr.transpose();
    double inner_prev = (xr.array() * f.product().array()).sum();
    for (int inner = 0; inner < kInnerIters; ++inner) {
      f.P = maximize_block(f.Q, weights, spec.center, xr, spec.beta, f.P, kJitter);
      f.Q = maximize_block(f.P, weights_t, center_t, xr_t, spec.beta, f.Q, kJitter);
      const double v = (xr.array() * f.product().array()).sum();
      if (std::abs(v - inner_prev) <= 1e-9 * std::max(1.0, std::abs(inner_prev))) break;
      inner_prev = v;
    }
    const RewardMatrix theta = f.product();
    AllocationMatrix next = solve_exact(theta, p).allocation;
    const double value = allocation_value(next, theta);
    const bool settled = next == x || std::abs(value - prev) < 1e-6 * std::max(1.0, std::abs(prev));
    x = std::move(next);
    out.theta_tilde = theta;
    out.objective = value;
    prev = value;
    if (settled) break;
  }
  out.allocation = std::move(x);
  return out;
}

}  // namespace detail

/// Optimistic allocation over the confidence ellipsoid.
///
/// Fast mode alternates the closed-form ellipsoid maximizer for a fixed X with
/// an exact re-allocation, started both from the all-ones matrix and from the
/// plug-in allocation, and keeps the better fixed point. Alternating mode runs
/// block-wise maximization over the factors (P, Q) of a rank-R candidate,
/// starting from `factors` (or a truncated SVD of the center when absent).
/// Both return a candidate scoring at least the plug-in allocation on the center.
inline OptimisticResult optimistic_allocation(const RewardMatrix& theta_hat, const ConfidenceSpec& spec,
                                              const Hyperparams& hp, const ConstraintProfile& p,
                                              OptimismMode mode = OptimismMode::Fast,
                                              const std::optional<FactorPair>& factors = std::nullopt) {
  spec.validate();
  require_shape(theta_hat, p);
  detail::require(spec.center.rows() == theta_hat.rows() && spec.center.cols() == theta_hat.cols(),
                  "confidence center does not match theta_hat");

  const AllocationResult plug_in = solve_exact(theta_hat, p);
  OptimisticResult best{plug_in.allocation, theta_hat, plug_in.value, 1};
  if (spec.beta <= 0.0) return best;

  const Eigen::MatrixXd weights = spec.weights();
  auto consider = [&best](OptimisticResult cand) {
    if (cand.objective > best.objective + 1e-12) best = std::move(cand);
  };

  if (mode == OptimismMode::Fast) {
    consider(detail::fast_from(AllocationMatrix::all_ones(theta_hat.rows(), theta_hat.cols()), spec, weights, p));
    consider(detail::fast_from(plug_in.allocation, spec, weights, p));
  } else {
    const Index rank = std::min({hp.rank, theta_hat.rows(), theta_hat.cols()});
    FactorPair start = factors ? *factors : detail::factor_by_svd(spec.center, rank);
    detail::require(start.P.rows() == theta_hat.rows() && start.Q.rows() == theta_hat.cols() &&
                        start.P.cols() == start.Q.cols(),
                    "factor pair does not match theta_hat");
    consider(detail::alternating(spec, weights, p, std::move(start)));
  }
  return best;
}

}  // namespace lrcomb
