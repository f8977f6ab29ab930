#pragma once

// Rating-file loaders (MovieLens 100k `u.data`, Restaurant-Consumer
// `rating_final.csv`) and rank-R completion of sparse ratings into a dense
// ground-truth reward matrix.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lrcomb/core.hpp"
#include "lrcomb/lowrank.hpp"

namespace lrcomb {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct Rating {
  Index user = 0;
  Index item = 0;
  double value = 0.0;
  friend bool operator==(const Rating&, const Rating&) = default;
};

struct SparseRatings {
  std::vector<Rating> triples;
  Index n_users = 0;
  Index n_items = 0;
  double lo = 0.0;
  double hi = 0.0;
};

namespace detail {

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
    s.remove_suffix(1);
  return s;
}

inline bool parse_int(std::string_view s, std::int64_t& out) {
  s = trim(s);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && !s.empty();
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

}  // namespace detail

/// Tab-separated `user item rating timestamp`, 1-based ids, ratings 1..5.
/// Repeated (user, item) pairs keep the entry with the latest timestamp.
/// n_users / n_items are the largest ids seen (943 / 1682 for the full file).
inline SparseRatings load_movielens(const std::string& path) {
  auto in = detail::open_input(path);
  SparseRatings out;
  out.lo = 1.0;
  out.hi = 5.0;
  std::map<std::pair<Index, Index>, std::pair<std::size_t, std::int64_t>> seen;  // -> (slot, timestamp)
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(detail::trim(line), '\t');
    if (fields.size() != 4) throw ParseError(path, lineno, "expected 4 tab-separated fields");
    std::int64_t user = 0, item = 0, rating = 0, stamp = 0;
    if (!detail::parse_int(fields[0], user) || !detail::parse_int(fields[1], item) || user < 1 || item < 1)
      throw ParseError(path, lineno, "user and item ids must be positive integers");
    if (!detail::parse_int(fields[2], rating) || rating < 1 || rating > 5)
      throw ParseError(path, lineno, "rating must be an integer in [1,5]");
    if (!detail::parse_int(fields[3], stamp)) throw ParseError(path, lineno, "timestamp must be an integer");

    const Rating r{user - 1, item - 1, static_cast<double>(rating)};
    out.n_users = std::max(out.n_users, static_cast<Index>(user));
    out.n_items = std::max(out.n_items, static_cast<Index>(item));
    auto [it, inserted] = seen.try_emplace({r.user, r.item}, out.triples.size(), stamp);
    if (inserted) {
      out.triples.push_back(r);
    } else if (stamp >= it->second.second) {
      out.triples[it->second.first] = r;
      it->second.second = stamp;
    }
  }
  if (out.triples.empty()) throw ParseError(path, lineno, "no ratings found");
  return out;
}

/// Comma-separated with header; needs columns userID, placeID, rating (0..2).
/// Identifiers are re-indexed densely in order of first appearance; a
/// repeated (user, place) pair keeps its last rating.
inline SparseRatings load_rc(const std::string& path) {
  auto in = detail::open_input(path);
  SparseRatings out;
  out.lo = 0.0;
  out.hi = 2.0;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError(path, 1, "missing header row");
  lineno = 1;
  const auto header = detail::split(line, ',');
  auto column = [&](std::string_view name) {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (detail::trim(header[k]) == name) return k;
    throw ParseError(path, 1, "missing required column '" + std::string(name) + "'");
  };
  const std::size_t user_col = column("userID");
  const std::size_t place_col = column("placeID");
  const std::size_t rating_col = column("rating");
  const std::size_t needed = std::max({user_col, place_col, rating_col}) + 1;

  std::unordered_map<std::string, Index> users, places;
  std::map<std::pair<Index, Index>, std::size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line, ',');
    if (fields.size() < needed) throw ParseError(path, lineno, "too few fields");
    std::int64_t rating = 0;
    if (!detail::parse_int(fields[rating_col], rating) || rating < 0 || rating > 2)
      throw ParseError(path, lineno, "rating must be 0, 1 or 2");
    const std::string user_id(detail::trim(fields[user_col]));
    const std::string place_id(detail::trim(fields[place_col]));
    if (user_id.empty() || place_id.empty()) throw ParseError(path, lineno, "empty identifier");
    const Index u = users.try_emplace(user_id, static_cast<Index>(users.size())).first->second;
    const Index i = places.try_emplace(place_id, static_cast<Index>(places.size())).first->second;
    const Rating r{u, i, static_cast<double>(rating)};
    auto [it, inserted] = seen.try_emplace({u, i}, out.triples.size());
    if (inserted)
      out.triples.push_back(r);
    else
      out.triples[it->second] = r;
  }
  if (out.triples.empty()) throw ParseError(path, lineno, "no ratings found");
  out.n_users = static_cast<Index>(users.size());
  out.n_items = static_cast<Index>(places.size());
  return out;
}

inline void write_movielens(const SparseRatings& ratings, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const Rating& r : ratings.triples)
    out << (r.user + 1) << '\t' << (r.item + 1) << '\t' << static_cast<std::int64_t>(std::lround(r.value)) << '\t'
        << 0 << '\n';
}

inline void write_rc(const SparseRatings& ratings, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "userID,placeID,rating,food_rating,service_rating\n";
  for (const Rating& r : ratings.triples) {
    const auto v = static_cast<std::int64_t>(std::lround(r.value));
    out << 'U' << (r.user + 1) << ',' << (100000 + r.item) << ',' << v << ',' << v << ',' << v << '\n';
  }
}

struct CompletionResult {
  RewardMatrix theta;          // clipped to [lo, hi]
  std::vector<double> objective;  // regularized objective after each sweep
  std::vector<double> rmse;       // unclipped training RMSE after each sweep
};

/// Rank-R ALS completion minimizing
///   sum_observed (p_u^T q_i - r)^2 + reg (||P||_F^2 + ||Q||_F^2).
inline CompletionResult complete_matrix(const SparseRatings& ratings, Index rank, double reg, int sweeps, Rng& rng) {
  const Index n = ratings.n_users;
  const Index m = ratings.n_items;
  detail::require(!ratings.triples.empty(), "complete_matrix: zero observations");
  detail::require(rank >= 1 && rank <= std::min(n, m), "rank ", rank, " exceeds min(N, M) = ", std::min(n, m));
  detail::require(reg >= 0.0 && sweeps >= 1, "complete_matrix: reg must be >= 0 and sweeps >= 1");
  constexpr double kJitter = 1e-10;

  std::vector<std::vector<std::pair<Index, double>>> by_user(static_cast<std::size_t>(n)),
      by_item(static_cast<std::size_t>(m));
  for (const Rating& r : ratings.triples) {
    detail::require(r.user >= 0 && r.user < n && r.item >= 0 && r.item < m, "rating index out of range");
    by_user[static_cast<std::size_t>(r.user)].emplace_back(r.item, r.value);
    by_item[static_cast<std::size_t>(r.item)].emplace_back(r.user, r.value);
  }

  FactorPair f = random_factors(n, m, rank, std::max(ratings.hi, 1e-12), rng);
  auto half_step = [&](const Eigen::MatrixXd& fixed, const auto& lists, Eigen::MatrixXd& out) {
    for (std::size_t row = 0; row < lists.size(); ++row) {
      Eigen::MatrixXd gram = reg * Eigen::MatrixXd::Identity(rank, rank);
      Eigen::VectorXd b = Eigen::VectorXd::Zero(rank);
      for (const auto& [col, value] : lists[row]) {
        const auto v = fixed.row(col).transpose();
        gram.noalias() += v * v.transpose();
        b += value * v;
      }
      Eigen::LLT<Eigen::MatrixXd> llt(gram);
      if (llt.info() != Eigen::Success) {
        gram.diagonal().array() += kJitter;
        llt.compute(gram);
      }
      out.row(static_cast<Index>(row)) = llt.solve(b).transpose();
    }
  };

  CompletionResult result;
  const double count = static_cast<double>(ratings.triples.size());
  for (int s = 0; s < sweeps; ++s) {
    half_step(f.Q, by_user, f.P);
    half_step(f.P, by_item, f.Q);
    double sse = 0.0;
    for (const Rating& r : ratings.triples) {
      const double e = f.P.row(r.user).dot(f.Q.row(r.item)) - r.value;
      sse += e * e;
    }
    result.objective.push_back(sse + reg * (f.P.squaredNorm() + f.Q.squaredNorm()));
    result.rmse.push_back(std::sqrt(sse / count));
  }
  result.theta = f.product().cwiseMax(ratings.lo).cwiseMin(ratings.hi);
  return result;
}

}  // namespace lrcomb
