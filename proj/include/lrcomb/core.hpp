#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lrcomb {

using Index = Eigen::Index;

/// Dense N x M reward matrix (ground truth, estimate or optimistic estimate).
using RewardMatrix = Eigen::MatrixXd;
using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

template <typename... Args>
[[noreturn]] void fail(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << std::forward<Args>(args));
  throw InvalidArgument(oss.str());
}

template <typename... Args>
void require(bool cond, Args&&... args) {
  if (!cond) fail(std::forward<Args>(args)...);
}

}  // namespace detail

/// Throws unless every entry lies in [0, bound] (mean rewards of the world).
inline void check_ground_truth(const RewardMatrix& theta, double bound) {
  for (Index u = 0; u < theta.rows(); ++u)
    for (Index i = 0; i < theta.cols(); ++i) {
      const double v = theta(u, i);
      detail::require(std::isfinite(v) && v >= 0.0 && v <= bound, "ground-truth entry (", u, ",", i,
                      ") = ", v, " outside [0, ", bound, "]");
    }
}

inline void check_finite(const RewardMatrix& theta) {
  detail::require(theta.allFinite(), "reward matrix contains non-finite entries");
}

// One (user, item) allocation pair.
struct Arm {
  Index user = 0;
  Index item = 0;
  friend auto operator<=>(const Arm&, const Arm&) = default;
};

/// Binary N x M allocation matrix X. Entry (u, i) is one iff item i is
/// allocated to user u. Stored user-major.
class AllocationMatrix {
 public:
  AllocationMatrix() = default;
  AllocationMatrix(Index n_users, Index n_items)
      : n_users_(n_users), n_items_(n_items), cells_(static_cast<std::size_t>(n_users * n_items), 0) {
    detail::require(n_users >= 0 && n_items >= 0, "negative allocation dimensions");
  }

  static AllocationMatrix all_ones(Index n_users, Index n_items) {
    AllocationMatrix x(n_users, n_items);
    std::fill(x.cells_.begin(), x.cells_.end(), std::uint8_t{1});
    return x;
  }

  /// The single-entry basis matrix E_{u,i}.
  static AllocationMatrix unit(Index n_users, Index n_items, Arm arm) {
    AllocationMatrix x(n_users, n_items);
    x.set(arm.user, arm.item, true);
    return x;
  }

  static AllocationMatrix from_arms(Index n_users, Index n_items, std::span<const Arm> arms) {
    AllocationMatrix x(n_users, n_items);
    for (const Arm& a : arms) x.set(a.user, a.item, true);
    return x;
  }

  Index n_users() const { return n_users_; }
  Index n_items() const { return n_items_; }

  bool operator()(Index u, Index i) const { return cells_[offset(u, i)] != 0; }

  void set(Index u, Index i, bool on) { cells_[offset(u, i)] = on ? 1 : 0; }

  /// Played arm set, in user-major order.
  std::vector<Arm> arms() const {
    std::vector<Arm> out;
    for (Index u = 0; u < n_users_; ++u)
      for (Index i = 0; i < n_items_; ++i)
        if ((*this)(u, i)) out.push_back({u, i});
    return out;
  }

  std::int64_t count() const {
    return std::count(cells_.begin(), cells_.end(), std::uint8_t{1});
  }

  std::int64_t row_sum(Index u) const {
    std::int64_t s = 0;
    for (Index i = 0; i < n_items_; ++i) s += (*this)(u, i);
    return s;
  }

  std::int64_t col_sum(Index i) const {
    std::int64_t s = 0;
    for (Index u = 0; u < n_users_; ++u) s += (*this)(u, i);
    return s;
  }

  Eigen::MatrixXd as_real() const {
    Eigen::MatrixXd m(n_users_, n_items_);
    for (Index u = 0; u < n_users_; ++u)
      for (Index i = 0; i < n_items_; ++i) m(u, i) = (*this)(u, i) ? 1.0 : 0.0;
    return m;
  }

  friend bool operator==(const AllocationMatrix&, const AllocationMatrix&) = default;

 private:
  std::size_t offset(Index u, Index i) const {
    detail::require(u >= 0 && u < n_users_ && i >= 0 && i < n_items_, "allocation index (", u, ",", i,
                    ") out of range ", n_users_, "x", n_items_);
    return static_cast<std::size_t>(u * n_items_ + i);
  }

  Index n_users_ = 0;
  Index n_items_ = 0;
  std::vector<std::uint8_t> cells_;
};

/// Per-round item capacities c_t (length M) and user demands d_t (length N).
class ConstraintProfile {
 public:
  ConstraintProfile() = default;
  ConstraintProfile(std::vector<std::int64_t> capacities, std::vector<std::int64_t> demands)
      : capacities_(std::move(capacities)), demands_(std::move(demands)) {
    for (std::size_t i = 0; i < capacities_.size(); ++i)
      detail::require(capacities_[i] >= 0, "capacity ", i, " is negative");
    for (std::size_t u = 0; u < demands_.size(); ++u)
      detail::require(demands_[u] >= 0, "demand ", u, " is negative");
  }

  const std::vector<std::int64_t>& capacities() const { return capacities_; }
  const std::vector<std::int64_t>& demands() const { return demands_; }
  std::int64_t capacity(Index i) const { return capacities_.at(static_cast<std::size_t>(i)); }
  std::int64_t demand(Index u) const { return demands_.at(static_cast<std::size_t>(u)); }
  Index n_users() const { return static_cast<Index>(demands_.size()); }
  Index n_items() const { return static_cast<Index>(capacities_.size()); }

  friend bool operator==(const ConstraintProfile&, const ConstraintProfile&) = default;

 private:
  std::vector<std::int64_t> capacities_;
  std::vector<std::int64_t> demands_;
};

struct Observation {
  std::int64_t round = 1;
  Index user = 0;
  Index item = 0;
  double reward = 0.0;
};

/// Append-only history of realized rewards with per-arm sufficient
/// statistics (pull counts, reward sums and sums of squares).
class ObservationLog {
 public:
  ObservationLog() = default;
  ObservationLog(Index n_users, Index n_items)
      : counts_(CountMatrix::Zero(n_users, n_items)),
        sums_(Eigen::MatrixXd::Zero(n_users, n_items)),
        sum_squares_(Eigen::MatrixXd::Zero(n_users, n_items)) {}

  void append(const Observation& obs) {
    detail::require(obs.user >= 0 && obs.user < n_users() && obs.item >= 0 && obs.item < n_items(),
                    "observation arm (", obs.user, ",", obs.item, ") out of range");
    detail::require(std::isfinite(obs.reward), "observation reward is not finite");
    detail::require(records_.empty() || obs.round >= records_.back().round,
                    "observation rounds must be nondecreasing");
    records_.push_back(obs);
    counts_(obs.user, obs.item) += 1;
    sums_(obs.user, obs.item) += obs.reward;
    sum_squares_(obs.user, obs.item) += obs.reward * obs.reward;
  }

  Index n_users() const { return counts_.rows(); }
  Index n_items() const { return counts_.cols(); }
  bool empty() const { return records_.empty(); }
  std::size_t size() const { return records_.size(); }

  const std::vector<Observation>& records() const { return records_; }
  const CountMatrix& counts() const { return counts_; }
  const Eigen::MatrixXd& sums() const { return sums_; }
  const Eigen::MatrixXd& sum_squares() const { return sum_squares_; }

  std::int64_t count(Index u, Index i) const { return counts_(u, i); }
  double mean(Index u, Index i) const {
    return counts_(u, i) > 0 ? sums_(u, i) / static_cast<double>(counts_(u, i)) : 0.0;
  }

 private:
  std::vector<Observation> records_;
  CountMatrix counts_;
  Eigen::MatrixXd sums_;
  Eigen::MatrixXd sum_squares_;
};

/// Estimator / confidence-set hyperparameters.
struct Hyperparams {
  double eta = 1.0;           // sub-Gaussian scale of the reward noise
  double B = 10.0;            // upper bound of the mean rewards
  double G = 0.0;             // Frobenius error radius of the initial estimate
  double gamma = 1.0;         // regularization weight
  double delta = 0.1;         // confidence level
  double alpha_cover = 0.01;  // covering scale
  Index rank = 1;

  void validate() const {
    detail::require(eta >= 0.0, "eta must be >= 0");
    detail::require(B > 0.0, "B must be > 0");
    detail::require(G >= 0.0, "G must be >= 0");
    detail::require(gamma > 0.0, "gamma must be > 0");
    detail::require(delta > 0.0 && delta < 1.0, "delta must lie in (0,1)");
    detail::require(alpha_cover > 0.0, "alpha_cover must be > 0");
    detail::require(rank >= 1, "rank must be >= 1");
  }
};

enum class ConstraintSide { Row, Column };

struct Violation {
  ConstraintSide side = ConstraintSide::Row;
  Index index = 0;
  std::int64_t excess = 0;
  friend bool operator==(const Violation&, const Violation&) = default;
};

struct FeasibilityReport {
  bool feasible = true;
  std::vector<Violation> violations;
};

inline void require_shape(const AllocationMatrix& x, const ConstraintProfile& p) {
  detail::require(x.n_users() == p.n_users() && x.n_items() == p.n_items(), "allocation is ", x.n_users(),
                  "x", x.n_items(), " but profile is ", p.n_users(), "x", p.n_items());
}

inline void require_shape(const AllocationMatrix& x, const RewardMatrix& theta) {
  detail::require(x.n_users() == theta.rows() && x.n_items() == theta.cols(), "allocation is ", x.n_users(),
                  "x", x.n_items(), " but reward matrix is ", theta.rows(), "x", theta.cols());
}

inline void require_shape(const RewardMatrix& theta, const ConstraintProfile& p) {
  detail::require(theta.rows() == p.n_users() && theta.cols() == p.n_items(), "reward matrix is ",
                  theta.rows(), "x", theta.cols(), " but profile is ", p.n_users(), "x", p.n_items());
}

/// Checks X 1_M <= d and X^T 1_N <= c; lists rows first, then columns.
inline FeasibilityReport validate_allocation(const AllocationMatrix& x, const ConstraintProfile& p) {
  require_shape(x, p);
  FeasibilityReport report;
  for (Index u = 0; u < x.n_users(); ++u) {
    const std::int64_t excess = x.row_sum(u) - p.demand(u);
    if (excess > 0) report.violations.push_back({ConstraintSide::Row, u, excess});
  }
  for (Index i = 0; i < x.n_items(); ++i) {
    const std::int64_t excess = x.col_sum(i) - p.capacity(i);
    if (excess > 0) report.violations.push_back({ConstraintSide::Column, i, excess});
  }
  report.feasible = report.violations.empty();
  return report;
}

inline bool is_feasible(const AllocationMatrix& x, const ConstraintProfile& p) {
  return validate_allocation(x, p).feasible;
}

/// Frobenius inner product <X, Theta>.
inline double allocation_value(const AllocationMatrix& x, const RewardMatrix& theta) {
  require_shape(x, theta);
  double v = 0.0;
  for (Index u = 0; u < theta.rows(); ++u)
    for (Index i = 0; i < theta.cols(); ++i)
      if (x(u, i)) v += theta(u, i);
  return v;
}

inline double round_regret(const AllocationMatrix& x, const AllocationMatrix& x_star,
                           const RewardMatrix& theta_star) {
  return allocation_value(x_star, theta_star) - allocation_value(x, theta_star);
}

}  // namespace lrcomb
