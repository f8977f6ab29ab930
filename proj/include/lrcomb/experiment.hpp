#pragma once

// Experiment harness: the select -> allocate -> observe -> update loop over
// (policy, seed) runs, per-round regret against the exact optimum, CSV
// logs, and the JSON experiment config.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "lrcomb/alloc_solver.hpp"
#include "lrcomb/core.hpp"
#include "lrcomb/data.hpp"
#include "lrcomb/environment.hpp"
#include "lrcomb/policies.hpp"

namespace lrcomb {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetSpec {
  std::string name;  // "movielens" or "rc"
  std::string path;
  Index rank = 0;    // 0 -> 20 for movielens, 5 for rc
  double reg = 0.1;
  int sweeps = 30;
};

struct ExperimentConfig {
  WorldConfig world;
  std::optional<DatasetSpec> dataset;
  std::int64_t horizon = 100;
  int n_seeds = 1;
  std::uint64_t master_seed = 0;
  std::string output_path = "results.csv";
  bool emit_per_round = true;
  int threads = 1;
  bool record_runtime = false;
  std::vector<PolicySpec> policies;

  void validate() const {
    if (horizon < 1) throw ConfigError("runner.horizon: must be >= 1");
    if (n_seeds < 1) throw ConfigError("runner.n_seeds: must be >= 1");
    if (threads < 1) throw ConfigError("runner.threads: must be >= 1");
    if (policies.empty()) throw ConfigError("policies: list must be nonempty");
    std::set<std::string> names;
    for (std::size_t k = 0; k < policies.size(); ++k)
      if (!names.insert(policies[k].name()).second)
        throw ConfigError("policies[" + std::to_string(k) + "]: duplicate policy label '" + policies[k].name() + "'");
    if (!dataset) {
      try {
        world.validate();
      } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("world: ") + e.what());
      }
      if (world.rank > std::min(world.n_users, world.n_items)) throw ConfigError("world.rank: exceeds min(N, M)");
    }
  }
};

struct RoundRecord {
  std::string policy;
  int seed = 0;
  std::int64_t t = 0;
  double reward = 0.0;
  double expected_reward = 0.0;
  double optimal_reward = 0.0;
  double regret = 0.0;
  double cumulative_regret = 0.0;
  std::int64_t dropped_count = 0;
  double runtime_ms = 0.0;
};

// ---------------------------------------------------------------------------
// Config parsing

namespace detail {

using nlohmann::json;

class ConfigReader {
 public:
  ConfigReader(const json& j, std::string path, std::set<std::string> allowed) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    for (const auto& [key, _] : j_.items())
      if (!allowed.count(key)) throw ConfigError(qualify(key) + ": unknown key");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  std::int64_t integer(const std::string& key, std::optional<std::int64_t> fallback = std::nullopt) const {
    if (!has(key)) return required(key, fallback);
    const json& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(qualify(key) + ": expected integer");
    return v.get<std::int64_t>();
  }

  double real(const std::string& key, std::optional<double> fallback = std::nullopt) const {
    if (!has(key)) return required(key, fallback);
    const json& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(qualify(key) + ": expected number");
    return v.get<double>();
  }

  bool boolean(const std::string& key, std::optional<bool> fallback = std::nullopt) const {
    if (!has(key)) return required(key, fallback);
    const json& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(qualify(key) + ": expected boolean");
    return v.get<bool>();
  }

  std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt) const {
    if (!has(key)) return required(key, fallback);
    const json& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(qualify(key) + ": expected string");
    return v.get<std::string>();
  }

  const json& raw(const std::string& key) const { return j_.at(key); }
  std::string qualify(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  template <typename T>
  T required(const std::string& key, const std::optional<T>& fallback) const {
    if (!fallback) throw ConfigError(qualify(key) + ": missing required field");
    return *fallback;
  }

  const json& j_;
  std::string path_;
};

inline PolicyKind parse_policy_kind(const std::string& name, const std::string& path) {
  if (name == "lrcomb") return PolicyKind::LrComb;
  if (name == "acf") return PolicyKind::Acf;
  if (name == "cucb") return PolicyKind::Cucb;
  if (name == "icf") return PolicyKind::Icf;
  if (name == "icf2") return PolicyKind::Icf2;
  throw ConfigError(path + ": unknown policy '" + name + "' (expected lrcomb, acf, cucb, icf or icf2)");
}

inline PolicySpec parse_policy(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  if (!j.contains("name")) throw ConfigError(path + ".name: missing required field");
  if (!j.at("name").is_string()) throw ConfigError(path + ".name: expected string");
  PolicySpec spec;
  spec.kind = parse_policy_kind(j.at("name").get<std::string>(), path + ".name");

  std::set<std::string> allowed{"name", "label"};
  switch (spec.kind) {
    case PolicyKind::LrComb:
      allowed.insert({"gamma", "rank", "prior", "kappa", "mode", "radius", "delta", "alpha_cover", "G"});
      break;
    case PolicyKind::Acf: allowed.insert({"gamma", "rank", "prior"}); break;
    case PolicyKind::Cucb: allowed.insert({"scale", "bonus_cap"}); break;
    case PolicyKind::Icf:
    case PolicyKind::Icf2: allowed.insert({"gamma", "rank", "prior", "refit_every", "kappa", "ridge"}); break;
  }
  const ConfigReader r(j, path, allowed);
  spec.label = r.string("label", "");
  if (r.has("gamma")) spec.gamma = r.real("gamma");
  if (r.has("rank")) spec.rank = r.integer("rank");
  if (spec.gamma <= 0.0) throw ConfigError(r.qualify("gamma") + ": must be > 0");
  if (spec.rank < 0) throw ConfigError(r.qualify("rank") + ": must be >= 0");
  if (r.has("prior")) spec.prior = r.real("prior");
  if (spec.prior < 0.0 || spec.prior > 1.0) throw ConfigError(r.qualify("prior") + ": must lie in [0,1]");

  if (spec.kind == PolicyKind::LrComb) {
    spec.kappa = r.real("kappa", 1.0);
    const std::string mode = r.string("mode", "fast");
    if (mode == "fast")
      spec.mode = OptimismMode::Fast;
    else if (mode == "alternating")
      spec.mode = OptimismMode::Alternating;
    else
      throw ConfigError(r.qualify("mode") + ": expected 'fast' or 'alternating'");
    const std::string radius = r.string("radius", "practical");
    if (radius == "practical")
      spec.radius = RadiusRule::Practical;
    else if (radius == "theory")
      spec.radius = RadiusRule::Theory;
    else
      throw ConfigError(r.qualify("radius") + ": expected 'practical' or 'theory'");
    spec.delta = r.real("delta", 0.1);
    spec.alpha_cover = r.real("alpha_cover", 0.01);
    spec.G = r.real("G", -1.0);
    if (spec.kappa < 0.0) throw ConfigError(r.qualify("kappa") + ": must be >= 0");
    if (!(spec.delta > 0.0 && spec.delta < 1.0)) throw ConfigError(r.qualify("delta") + ": must lie in (0,1)");
    if (spec.alpha_cover <= 0.0) throw ConfigError(r.qualify("alpha_cover") + ": must be > 0");
    if (r.has("G") && spec.G < 0.0) throw ConfigError(r.qualify("G") + ": must be >= 0");
  } else if (spec.kind == PolicyKind::Cucb) {
    spec.cucb_scale = r.real("scale", 1.0);
    spec.bonus_cap = r.real("bonus_cap", -1.0);
    if (spec.cucb_scale < 0.0) throw ConfigError(r.qualify("scale") + ": must be >= 0");
  } else if (spec.kind == PolicyKind::Icf || spec.kind == PolicyKind::Icf2) {
    spec.refit_every = static_cast<int>(r.integer("refit_every", 5));
    spec.kappa_icf = r.real("kappa", 1.0);
    spec.icf_ridge = r.real("ridge", 1.0);
    if (spec.refit_every < 1) throw ConfigError(r.qualify("refit_every") + ": must be >= 1");
    if (spec.kappa_icf < 0.0) throw ConfigError(r.qualify("kappa") + ": must be >= 0");
    if (spec.icf_ridge <= 0.0) throw ConfigError(r.qualify("ridge") + ": must be > 0");
  }
  return spec;
}

inline void parse_dynamics(const ConfigReader& r, WorldConfig& w) {
  const std::string dyn = r.string("dynamics", "static");
  if (dyn == "static")
    w.dynamics = Dynamics::Static;
  else if (dyn == "dynamic")
    w.dynamics = Dynamics::Dynamic;
  else
    throw ConfigError(r.qualify("dynamics") + ": expected 'static' or 'dynamic'");
  w.eta = r.real("eta", 1.0);
  w.p_active = r.real("p_active", 0.2);
  w.include_zero_capacity = r.boolean("include_zero_capacity", false);
  if (r.has("c_max")) {
    const json& c = r.raw("c_max");
    if (c.is_string() && c.get<std::string>() == "auto")
      w.c_max_fixed = 0;
    else if (c.is_number_integer() && c.get<std::int64_t>() >= 1)
      w.c_max_fixed = c.get<std::int64_t>();
    else
      throw ConfigError(r.qualify("c_max") + ": expected \"auto\" or a positive integer");
  }
  if (w.eta < 0.0) throw ConfigError(r.qualify("eta") + ": must be >= 0");
  if (w.p_active < 0.0 || w.p_active > 1.0) throw ConfigError(r.qualify("p_active") + ": must lie in [0,1]");
}

}  // namespace detail

/// Parses and validates a JSON experiment config (schema in README).
inline ExperimentConfig parse_config_text(const std::string& text) {
  using detail::ConfigReader;
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  const ConfigReader top(root, "", {"world", "runner", "policies"});
  if (!top.has("world")) throw ConfigError("world: missing required field");
  if (!top.has("policies")) throw ConfigError("policies: missing required field");

  ExperimentConfig cfg;
  const nlohmann::json& wj = root.at("world");
  if (!wj.is_object()) throw ConfigError("world: expected an object");
  const std::string type = wj.contains("type") && wj.at("type").is_string() ? wj.at("type").get<std::string>()
                                                                             : std::string("synthetic");
  if (wj.contains("type") && !wj.at("type").is_string()) throw ConfigError("world.type: expected string");
  const std::set<std::string> common{"type", "eta", "dynamics", "p_active", "c_max", "include_zero_capacity"};
  if (type == "synthetic") {
    auto allowed = common;
    allowed.insert({"n_users", "n_items", "rank", "B", "theta_noise"});
    const ConfigReader w(wj, "world", allowed);
    cfg.world.n_users = w.integer("n_users");
    cfg.world.n_items = w.integer("n_items");
    cfg.world.rank = w.integer("rank");
    cfg.world.B = w.real("B", 10.0);
    cfg.world.theta_noise = w.real("theta_noise", 0.0);
    detail::parse_dynamics(w, cfg.world);
    if (cfg.world.n_users < 1) throw ConfigError("world.n_users: must be >= 1");
    if (cfg.world.n_items < 1) throw ConfigError("world.n_items: must be >= 1");
    if (cfg.world.rank < 1) throw ConfigError("world.rank: must be >= 1");
    if (cfg.world.B <= 0.0) throw ConfigError("world.B: must be > 0");
  } else if (type == "movielens" || type == "rc") {
    auto allowed = common;
    allowed.insert({"path", "rank", "completion_reg", "completion_sweeps"});
    const ConfigReader w(wj, "world", allowed);
    DatasetSpec ds;
    ds.name = type;
    ds.path = w.string("path");
    ds.rank = w.integer("rank", type == "movielens" ? 20 : 5);
    ds.reg = w.real("completion_reg", 0.1);
    ds.sweeps = static_cast<int>(w.integer("completion_sweeps", 30));
    if (ds.rank < 1) throw ConfigError("world.rank: must be >= 1");
    if (ds.reg < 0.0) throw ConfigError("world.completion_reg: must be >= 0");
    if (ds.sweeps < 1) throw ConfigError("world.completion_sweeps: must be >= 1");
    detail::parse_dynamics(w, cfg.world);
    cfg.world.rank = ds.rank;
    cfg.dataset = ds;
  } else {
    throw ConfigError("world.type: unknown world type '" + type + "' (expected synthetic, movielens or rc)");
  }

  if (top.has("runner")) {
    const ConfigReader r(root.at("runner"), "runner",
                         {"horizon", "n_seeds", "master_seed", "output", "emit_per_round", "threads",
                          "record_runtime"});
    cfg.horizon = r.integer("horizon", 100);
    cfg.n_seeds = static_cast<int>(r.integer("n_seeds", 1));
    const std::int64_t seed = r.integer("master_seed", 0);
    if (seed < 0) throw ConfigError("runner.master_seed: must be >= 0");
    cfg.master_seed = static_cast<std::uint64_t>(seed);
    cfg.output_path = r.string("output", "results.csv");
    cfg.emit_per_round = r.boolean("emit_per_round", true);
    cfg.threads = static_cast<int>(r.integer("threads", 1));
    cfg.record_runtime = r.boolean("record_runtime", false);
  }

  const nlohmann::json& pj = root.at("policies");
  if (!pj.is_array()) throw ConfigError("policies: expected a list");
  for (std::size_t k = 0; k < pj.size(); ++k)
    cfg.policies.push_back(detail::parse_policy(pj[k], "policies[" + std::to_string(k) + "]"));

  cfg.validate();
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

// ---------------------------------------------------------------------------
// Runner

/// Calls fn(k) for k in [0, count) on up to `threads` workers.
template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  const auto workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t k = next++; k < count; k = next++) fn(k);
      } catch (...) {
        errors[w] = std::current_exception();
        next = count;
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// One problem instance: ground truth, per-round profiles and optimal values.
struct SeedWorld {
  WorldConfig world;
  RewardMatrix theta_star;
  std::vector<ConstraintProfile> profiles;  // index t-1
  std::vector<double> optimal;              // <X*_t, Theta*>
};

inline SeedWorld build_seed_world(const ExperimentConfig& cfg, const RewardMatrix* dataset_theta, int seed) {
  const std::uint64_t world_seed = derive_seed(cfg.master_seed, static_cast<std::uint64_t>(seed));
  SeedWorld sw;
  sw.world = cfg.world;
  sw.world.seed = derive_seed(world_seed, 2);
  if (dataset_theta) {
    sw.theta_star = *dataset_theta;
  } else {
    Rng theta_rng(derive_seed(world_seed, 1));
    sw.theta_star = gen_synthetic_theta(sw.world, theta_rng);
  }
  Rng constraint_rng(derive_seed(world_seed, 3));
  for (std::int64_t t = 1; t <= cfg.horizon; ++t) {
    sw.profiles.push_back(sample_constraints(sw.world, constraint_rng, t));
    // X*_t depends only on Theta* and this round's profile.
    sw.optimal.push_back(solve_exact(sw.theta_star, sw.profiles.back()).value);
  }
  return sw;
}

inline std::vector<RoundRecord> run_policy(const ExperimentConfig& cfg, const SeedWorld& sw, std::size_t policy_index,
                                           int seed) {
  const PolicySpec& spec = cfg.policies[policy_index];
  const std::uint64_t world_seed = derive_seed(cfg.master_seed, static_cast<std::uint64_t>(seed));
  const Index n = sw.theta_star.rows();
  const Index m = sw.theta_star.cols();
  auto policy = make_policy(spec, n, m, sw.world.B, sw.world.eta, sw.world.rank,
                            derive_seed(world_seed, 1000 + policy_index));
  Rng env_rng(derive_seed(world_seed, 2000 + policy_index));

  std::vector<RoundRecord> out;
  out.reserve(static_cast<std::size_t>(cfg.horizon));
  double cumulative = 0.0;
  for (std::int64_t t = 1; t <= cfg.horizon; ++t) {
    const ConstraintProfile& profile = sw.profiles[static_cast<std::size_t>(t - 1)];
    const auto start = std::chrono::steady_clock::now();
    AllocationMatrix requested = policy->select(profile);
    DropResult served{requested, {}};
    if (!respects_capacity(spec.kind)) {
      served = apply_capacity_drop(requested, profile, env_rng);
    } else if (!is_feasible(requested, profile)) {
      throw std::logic_error(spec.name() + " produced an infeasible allocation at round " + std::to_string(t));
    }
    auto rewards = sample_rewards(sw.theta_star, served.realized, sw.world.eta, env_rng);
    double realized_sum = 0.0;
    for (const ArmReward& r : rewards) realized_sum += r.reward;
    const auto dropped = static_cast<std::int64_t>(served.dropped.size());
    policy->update(make_feedback(spec.kind, served.realized, std::move(rewards), std::move(served.dropped)));
    const auto stop = std::chrono::steady_clock::now();

    RoundRecord rec;
    rec.policy = spec.name();
    rec.seed = seed;
    rec.t = t;
    rec.reward = realized_sum;
    rec.expected_reward = allocation_value(served.realized, sw.theta_star);
    rec.optimal_reward = sw.optimal[static_cast<std::size_t>(t - 1)];
    rec.regret = rec.optimal_reward - rec.expected_reward;
    cumulative += rec.regret;
    rec.cumulative_regret = cumulative;
    rec.dropped_count = dropped;
    rec.runtime_ms =
        cfg.record_runtime ? std::chrono::duration<double, std::milli>(stop - start).count() : 0.0;
    out.push_back(std::move(rec));
  }
  return out;
}

inline RewardMatrix dataset_ground_truth(const ExperimentConfig& cfg, ExperimentConfig& resolved) {
  const DatasetSpec& ds = *cfg.dataset;
  const SparseRatings ratings = ds.name == "movielens" ? load_movielens(ds.path) : load_rc(ds.path);
  Rng rng(derive_seed(cfg.master_seed, 0xDA7A));
  const Index rank = std::min({ds.rank, ratings.n_users, ratings.n_items});
  RewardMatrix theta = complete_matrix(ratings, rank, ds.reg, ds.sweeps, rng).theta;
  resolved.world.n_users = ratings.n_users;
  resolved.world.n_items = ratings.n_items;
  resolved.world.rank = rank;
  resolved.world.B = ratings.hi;
  return theta;
}

/// Runs every (policy, seed) pair; records are ordered by (policy in config
/// order, seed, t). With emit_per_round off only the final round is kept.
inline std::vector<RoundRecord> run_experiment(const ExperimentConfig& input) {
  input.validate();
  ExperimentConfig cfg = input;
  std::optional<RewardMatrix> dataset_theta;
  if (cfg.dataset) dataset_theta = dataset_ground_truth(input, cfg);

  std::vector<SeedWorld> worlds(static_cast<std::size_t>(cfg.n_seeds));
  parallel_for(worlds.size(), cfg.threads, [&](std::size_t s) {
    worlds[s] = build_seed_world(cfg, dataset_theta ? &*dataset_theta : nullptr, static_cast<int>(s));
  });

  const std::size_t n_policies = cfg.policies.size();
  std::vector<std::vector<RoundRecord>> runs(n_policies * worlds.size());
  parallel_for(runs.size(), cfg.threads, [&](std::size_t k) {
    const std::size_t p = k / worlds.size();
    const int s = static_cast<int>(k % worlds.size());
    runs[k] = run_policy(cfg, worlds[static_cast<std::size_t>(s)], p, s);
  });

  std::vector<RoundRecord> records;
  for (auto& run : runs)
    for (auto& rec : run)
      if (cfg.emit_per_round || rec.t == cfg.horizon) records.push_back(std::move(rec));
  return records;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* kCsvHeader =
    "policy,seed,t,reward,expected_reward,optimal_reward,regret,cumulative_regret,dropped_count,runtime_ms";

inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline void write_csv(const std::vector<RoundRecord>& records, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const RoundRecord& r : records) {
    out << r.policy << ',' << r.seed << ',' << r.t << ',' << format_real(r.reward) << ','
        << format_real(r.expected_reward) << ',' << format_real(r.optimal_reward) << ',' << format_real(r.regret)
        << ',' << format_real(r.cumulative_regret) << ',' << r.dropped_count << ',' << format_real(r.runtime_ms)
        << '\n';
  }
}

inline void write_csv(const std::vector<RoundRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_csv(records, out);
  if (!out) throw std::runtime_error("write failed for " + path);
}

inline std::vector<RoundRecord> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kCsvHeader)
    throw ParseError(path, 1, "unexpected CSV header");
  std::vector<RoundRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(detail::trim(line), ',');
    if (f.size() != 10) throw ParseError(path, lineno, "expected 10 fields");
    try {
      RoundRecord r;
      r.policy = std::string(f[0]);
      r.seed = std::stoi(std::string(f[1]));
      r.t = std::stoll(std::string(f[2]));
      r.reward = std::stod(std::string(f[3]));
      r.expected_reward = std::stod(std::string(f[4]));
      r.optimal_reward = std::stod(std::string(f[5]));
      r.regret = std::stod(std::string(f[6]));
      r.cumulative_regret = std::stod(std::string(f[7]));
      r.dropped_count = std::stoll(std::string(f[8]));
      r.runtime_ms = std::stod(std::string(f[9]));
      out.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw ParseError(path, lineno, "malformed numeric field");
    }
  }
  return out;
}

}  // namespace lrcomb
