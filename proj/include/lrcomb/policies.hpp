#pragma once

// Interactive allocation policies: LR-COMB (optimistic low-rank), ACF
// (greedy plug-in), CUCB (independent-arm UCB), and the capacity-oblivious
// ICF / ICF2 (per-user linear UCB over learned item factors).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lrcomb/alloc_solver.hpp"
#include "lrcomb/core.hpp"
#include "lrcomb/environment.hpp"
#include "lrcomb/lowrank.hpp"

namespace lrcomb {

enum class PolicyKind { LrComb, Acf, Cucb, Icf, Icf2 };

enum class RadiusRule { Practical, Theory };

inline std::string default_label(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::LrComb: return "LR-COMB";
    case PolicyKind::Acf: return "ACF";
    case PolicyKind::Cucb: return "CUCB";
    case PolicyKind::Icf: return "ICF";
    case PolicyKind::Icf2: return "ICF2";
  }
  return "?";
}

inline bool respects_capacity(PolicyKind kind) { return kind != PolicyKind::Icf && kind != PolicyKind::Icf2; }

struct PolicySpec {
  PolicyKind kind = PolicyKind::LrComb;
  std::string label;  // empty -> default_label(kind)

  // factor-model policies (LR-COMB, ACF, ICF*)
  double gamma = 1.0;
  Index rank = 0;  // 0 -> world rank
  double prior = 0.2;  // initial estimate Theta_bar = prior * B everywhere

  // LR-COMB
  double kappa = 1.0;
  OptimismMode mode = OptimismMode::Fast;
  RadiusRule radius = RadiusRule::Practical;
  double delta = 0.1;
  double alpha_cover = 0.01;
  double G = -1.0;  // < 0 -> max(prior, 1 - prior) * B * sqrt(NM)

  // CUCB: bonus scale * B * sqrt(1.5 ln t / n), indices clipped to [0, B + bonus_cap]
  double cucb_scale = 1.0;
  double bonus_cap = -1.0;  // < 0 -> B

  // ICF / ICF2
  int refit_every = 5;
  double icf_ridge = 1.0;
  double kappa_icf = 1.0;

  std::string name() const { return label.empty() ? default_label(kind) : label; }
};

/// Per-round feedback delivered to a policy. `forced_zero` lists pairs whose
/// failed delivery is reported as a zero reward (ICF2).
struct RoundFeedback {
  AllocationMatrix realized;
  std::vector<ArmReward> rewards;
  std::vector<Arm> forced_zero;
  std::vector<Arm> dropped;
};

inline RoundFeedback make_feedback(PolicyKind kind, AllocationMatrix realized, std::vector<ArmReward> rewards,
                                   std::vector<Arm> dropped) {
  RoundFeedback fb{std::move(realized), std::move(rewards), {}, std::move(dropped)};
  if (kind == PolicyKind::Icf2) fb.forced_zero = fb.dropped;
  return fb;
}

/// UCB index with +infinity for unplayed arms.
inline double cucb_index(double mean, std::int64_t count, double t, double B = 1.0, double scale = 1.0) {
  if (count <= 0) return std::numeric_limits<double>::infinity();
  return mean + scale * B * std::sqrt(1.5 * std::log(std::max(t, 1.0)) / static_cast<double>(count));
}

class Policy {
 public:
  Policy(PolicySpec spec, Index n_users, Index n_items, Hyperparams hp)
      : spec_(std::move(spec)), hp_(hp), log_(n_users, n_items) {
    hp_.validate();
    detail::require(hp_.rank <= std::min(n_users, n_items), "policy rank ", hp_.rank, " exceeds min(N, M)");
  }
  virtual ~Policy() = default;
  Policy(const Policy&) = delete;
  Policy& operator=(const Policy&) = delete;

  /// Requested allocation for this round's profile.
  AllocationMatrix select(const ConstraintProfile& p) {
    detail::require(p.n_users() == n_users() && p.n_items() == n_items(), "profile is ", p.n_users(), "x",
                    p.n_items(), " but policy was built for ", n_users(), "x", n_items());
    AllocationMatrix x = choose(p);
    last_request_ = x;
    return x;
  }

  void update(const RoundFeedback& fb) {
    const bool silent = fb.rewards.empty() && fb.dropped.empty() && fb.forced_zero.empty();
    detail::require(silent || last_request_.has_value(), "feedback received before any request");
    auto requested = [&](Index u, Index i) {
      return last_request_ && u >= 0 && u < n_users() && i >= 0 && i < n_items() && (*last_request_)(u, i);
    };
    for (const ArmReward& r : fb.rewards)
      detail::require(requested(r.user, r.item), "reward for (", r.user, ",", r.item, ") not in the requested allocation");
    for (const Arm& a : fb.dropped) {
      detail::require(requested(a.user, a.item), "dropped pair (", a.user, ",", a.item, ") was not requested");
      detail::require(fb.realized.n_users() == 0 || !fb.realized(a.user, a.item),
                      "pair (", a.user, ",", a.item, ") both realized and dropped");
    }
    for (const Arm& a : fb.forced_zero)
      detail::require(requested(a.user, a.item), "zero-reward pair (", a.user, ",", a.item, ") was not requested");

    for (const ArmReward& r : fb.rewards) log_.append({round_, r.user, r.item, r.reward});
    for (const Arm& a : fb.forced_zero) log_.append({round_, a.user, a.item, 0.0});
    ++round_;
    last_request_.reset();
  }

  PolicyKind kind() const { return spec_.kind; }
  std::string name() const { return spec_.name(); }
  const PolicySpec& spec() const { return spec_; }
  const Hyperparams& hyperparams() const { return hp_; }
  const ObservationLog& log() const { return log_; }
  std::int64_t round() const { return round_; }
  Index n_users() const { return log_.n_users(); }
  Index n_items() const { return log_.n_items(); }

 protected:
  virtual AllocationMatrix choose(const ConstraintProfile& p) = 0;

  PolicySpec spec_;
  Hyperparams hp_;
  ObservationLog log_;
  std::int64_t round_ = 1;
  std::optional<AllocationMatrix> last_request_;
};

/// Shared ALS estimate for the factor-model policies, warm-started from the
/// previous round's factors.
class FactorModelPolicy : public Policy {
 public:
  FactorModelPolicy(PolicySpec spec, Index n_users, Index n_items, Hyperparams hp, Rng rng)
      : Policy(std::move(spec), n_users, n_items, hp),
        theta_bar_(RewardMatrix::Constant(n_users, n_items, spec_.prior * hp_.B)),
        factors_(random_factors(n_users, n_items, hp_.rank, hp_.B, rng)) {}

  /// Refits the regularized least-squares estimate on the current log.
  const RewardMatrix& fit() {
    AlsResult res = als_least_squares(log_, hp_, theta_bar_, factors_);
    factors_ = std::move(res.factors);
    estimate_ = std::move(res.estimate);
    return estimate_;
  }

  const RewardMatrix& estimate() const { return estimate_; }
  const FactorPair& factors() const { return factors_; }
  void set_prior(RewardMatrix theta_bar) {
    detail::require(theta_bar.rows() == n_users() && theta_bar.cols() == n_items(), "prior shape mismatch");
    theta_bar_ = std::move(theta_bar);
  }

 protected:
  RewardMatrix theta_bar_;
  FactorPair factors_;
  RewardMatrix estimate_;
};

class AcfPolicy final : public FactorModelPolicy {
 public:
  using FactorModelPolicy::FactorModelPolicy;

  static AllocationMatrix allocate(const RewardMatrix& theta_hat, const ConstraintProfile& p) {
    return solve_exact(theta_hat, p).allocation;
  }

 protected:
  AllocationMatrix choose(const ConstraintProfile& p) override { return allocate(fit(), p); }
};

class LrCombPolicy final : public FactorModelPolicy {
 public:
  using FactorModelPolicy::FactorModelPolicy;

  /// Confidence radius (squared) used at the current round.
  double radius() const {
    if (spec_.radius == RadiusRule::Theory) {
      Hyperparams hp = hp_;
      hp.delta = spec_.delta;
      hp.alpha_cover = spec_.alpha_cover;
      hp.G = hp_.G;
      return spec_.kappa * spec_.kappa * beta_star(hp, round_, n_users(), n_items());
    }
    return practical_beta(spec_.kappa, hp_.eta, n_users(), n_items(), round_);
  }

  OptimisticResult allocate(const RewardMatrix& theta_hat, const ConstraintProfile& p) const {
    const ConfidenceSpec conf{theta_hat, log_.counts(), hp_.gamma, radius()};
    return optimistic_allocation(theta_hat, conf, hp_, p, spec_.mode, factors_);
  }

  const OptimisticResult& last() const { return last_; }

 protected:
  AllocationMatrix choose(const ConstraintProfile& p) override {
    last_ = allocate(fit(), p);
    return last_.allocation;
  }

 private:
  OptimisticResult last_;
};

class CucbPolicy final : public Policy {
 public:
  using Policy::Policy;

  RewardMatrix index_matrix() const {
    const double cap = hp_.B + (spec_.bonus_cap < 0.0 ? hp_.B : spec_.bonus_cap);
    RewardMatrix idx(n_users(), n_items());
    for (Index u = 0; u < n_users(); ++u)
      for (Index i = 0; i < n_items(); ++i) {
        const double v = cucb_index(log_.mean(u, i), log_.count(u, i), static_cast<double>(round_), hp_.B, spec_.cucb_scale);
        idx(u, i) = std::clamp(v, 0.0, cap);
      }
    return idx;
  }

 protected:
  AllocationMatrix choose(const ConstraintProfile& p) override { return solve_exact(index_matrix(), p).allocation; }
};

/// Capacity-oblivious per-user linear UCB. Item features are the Q factor of
/// an ALS refit of the policy's own log, refreshed every `refit_every` rounds.
class IcfPolicy final : public Policy {
 public:
  IcfPolicy(PolicySpec spec, Index n_users, Index n_items, Hyperparams hp, Rng rng)
      : Policy(std::move(spec), n_users, n_items, hp),
        theta_bar_(RewardMatrix::Constant(n_users, n_items, spec_.prior * hp_.B)),
        factors_(random_factors(n_users, n_items, hp_.rank, hp_.B, rng)) {
    detail::require(spec_.refit_every >= 1 && spec_.icf_ridge > 0.0 && spec_.kappa_icf >= 0.0,
                    "ICF needs refit_every >= 1, ridge > 0, kappa >= 0");
  }

  /// Per-user UCB scores over items (N x M).
  RewardMatrix scores() const {
    const Index rank = factors_.rank();
    const Eigen::MatrixXd& q = factors_.Q;
    const double alpha = spec_.kappa_icf * hp_.eta *
                         std::sqrt(static_cast<double>(rank) * std::log(static_cast<double>(round_)));
    const Eigen::MatrixXd counts = log_.counts().cast<double>();
    RewardMatrix out(n_users(), n_items());
    for (Index u = 0; u < n_users(); ++u) {
      Eigen::MatrixXd a = spec_.icf_ridge * Eigen::MatrixXd::Identity(rank, rank);
      a.noalias() += q.transpose() * counts.row(u).transpose().asDiagonal() * q;
      const Eigen::VectorXd b = q.transpose() * log_.sums().row(u).transpose();
      const Eigen::LLT<Eigen::MatrixXd> llt(a);
      const Eigen::VectorXd w = llt.solve(b);
      const Eigen::MatrixXd a_inv_qt = llt.solve(q.transpose());  // R x M
      for (Index i = 0; i < n_items(); ++i) {
        const double width = std::sqrt(std::max(0.0, q.row(i).dot(a_inv_qt.col(i))));
        out(u, i) = q.row(i).dot(w) + alpha * width;
      }
    }
    return out;
  }

 protected:
  AllocationMatrix choose(const ConstraintProfile& p) override {
    if (!log_.empty() && (round_ - 1) % spec_.refit_every == 0) {
      AlsResult res = als_least_squares(log_, hp_, theta_bar_, factors_);
      factors_ = std::move(res.factors);
    }
    const RewardMatrix s = scores();
    AllocationMatrix x(n_users(), n_items());
    std::vector<Index> order(static_cast<std::size_t>(n_items()));
    for (Index u = 0; u < n_users(); ++u) {
      for (Index i = 0; i < n_items(); ++i) order[static_cast<std::size_t>(i)] = i;
      std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return s(u, a) > s(u, b); });
      const auto take = std::min<std::size_t>(order.size(), static_cast<std::size_t>(p.demand(u)));
      for (std::size_t k = 0; k < take; ++k) x.set(u, order[k], true);
    }
    return x;
  }

 private:
  RewardMatrix theta_bar_;
  FactorPair factors_;
};

/// Builds a policy with world-level B and eta; the rank defaults to the
/// world's when spec.rank is 0.
inline std::unique_ptr<Policy> make_policy(const PolicySpec& spec, Index n_users, Index n_items, double B, double eta,
                                           Index world_rank, std::uint64_t seed) {
  Hyperparams hp;
  hp.B = B;
  hp.eta = eta;
  hp.gamma = spec.gamma;
  hp.rank = std::min({spec.rank > 0 ? spec.rank : world_rank, n_users, n_items});
  hp.delta = spec.delta;
  hp.alpha_cover = spec.alpha_cover;
  hp.G = spec.G >= 0.0 ? spec.G
                       : std::max(spec.prior, 1.0 - spec.prior) * B *
                             std::sqrt(static_cast<double>(n_users) * static_cast<double>(n_items));
  detail::require(spec.prior >= 0.0 && spec.prior <= 1.0, "prior must lie in [0,1]");
  Rng rng(seed);
  switch (spec.kind) {
    case PolicyKind::LrComb: return std::make_unique<LrCombPolicy>(spec, n_users, n_items, hp, rng);
    case PolicyKind::Acf: return std::make_unique<AcfPolicy>(spec, n_users, n_items, hp, rng);
    case PolicyKind::Cucb: return std::make_unique<CucbPolicy>(spec, n_users, n_items, hp);
    case PolicyKind::Icf:
    case PolicyKind::Icf2: return std::make_unique<IcfPolicy>(spec, n_users, n_items, hp, rng);
  }
  detail::fail("unknown policy kind");
}

}  // namespace lrcomb
