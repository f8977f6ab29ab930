// lrcomb command line: run experiments, solve one allocation, time the solvers.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lrcomb/lrcomb.hpp"

namespace {

using namespace lrcomb;

std::vector<std::vector<double>> read_numeric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    std::vector<double> row;
    for (auto field : detail::split(detail::trim(line), ',')) {
      const std::string s(detail::trim(field));
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s, &used);
      } catch (const std::logic_error&) {
        throw ParseError(path, lineno, "not a number: '" + s + "'");
      }
      if (used != s.size()) throw ParseError(path, lineno, "not a number: '" + s + "'");
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path, lineno, "empty file");
  return rows;
}

std::vector<std::int64_t> read_integer_list(const std::string& path) {
  std::vector<std::int64_t> out;
  for (const auto& row : read_numeric_csv(path))
    for (double v : row) {
      if (v != std::floor(v)) throw std::runtime_error(path + ": expected integers, got " + std::to_string(v));
      out.push_back(static_cast<std::int64_t>(v));
    }
  return out;
}

std::string resolve_output(const std::string& path) {
  const char* dir = std::getenv("LRCOMB_OUTPUT_DIR");
  if (!dir || !*dir) return path;
  return (std::filesystem::path(dir) / std::filesystem::path(path).filename()).string();
}

int cmd_run(const std::string& config_path, const std::string& out, int seeds, int threads) {
  ExperimentConfig cfg = parse_config(config_path);
  if (!out.empty()) cfg.output_path = out;
  if (seeds > 0) cfg.n_seeds = seeds;
  if (threads > 0) cfg.threads = threads;
  cfg.output_path = resolve_output(cfg.output_path);

  const auto records = run_experiment(cfg);
  const auto parent = std::filesystem::path(cfg.output_path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  write_csv(records, cfg.output_path);

  std::map<std::string, std::pair<double, int>> final_regret;
  for (const RoundRecord& r : records)
    if (r.t == cfg.horizon) {
      auto& [sum, count] = final_regret[r.policy];
      sum += r.cumulative_regret;
      ++count;
    }
  for (const PolicySpec& p : cfg.policies) {
    const auto& [sum, count] = final_regret[p.name()];
    std::cout << p.name() << ": mean cumulative regret at T=" << cfg.horizon << " over " << count
              << " seeds = " << format_real(count ? sum / count : 0.0) << '\n';
  }
  std::cout << "wrote " << records.size() << " records to " << cfg.output_path << '\n';
  return 0;
}

int cmd_oracle(const std::string& theta_path, const std::string& cap_path, const std::string& demand_path) {
  const auto rows = read_numeric_csv(theta_path);
  RewardMatrix theta(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t u = 0; u < rows.size(); ++u) {
    if (rows[u].size() != rows.front().size())
      throw ParseError(theta_path, u + 1, "ragged row: expected " + std::to_string(rows.front().size()) + " columns");
    for (std::size_t i = 0; i < rows[u].size(); ++i) theta(static_cast<Index>(u), static_cast<Index>(i)) = rows[u][i];
  }
  const ConstraintProfile profile(read_integer_list(cap_path), read_integer_list(demand_path));
  const AllocationResult res = solve_exact(theta, profile);
  for (Index u = 0; u < res.allocation.n_users(); ++u) {
    for (Index i = 0; i < res.allocation.n_items(); ++i) std::cout << (i ? "," : "") << int(res.allocation(u, i));
    std::cout << '\n';
  }
  std::cout << "value " << format_real(res.value) << '\n';
  return 0;
}

int cmd_bench(Index n, Index m, Index rank, int reps, std::uint64_t seed) {
  WorldConfig world;
  world.n_users = n;
  world.n_items = m;
  world.rank = rank;
  world.seed = seed;
  Rng rng(seed);
  const RewardMatrix theta = gen_synthetic_theta(world, rng);
  const ConstraintProfile profile = sample_constraints(world, rng, 1);

  using clock = std::chrono::steady_clock;
  auto ms = [](clock::duration d) { return std::chrono::duration<double, std::milli>(d).count(); };

  auto t0 = clock::now();
  double value = 0.0;
  for (int k = 0; k < reps; ++k) value = solve_exact(theta, profile).value;
  const double flow_ms = ms(clock::now() - t0) / reps;

  ObservationLog log(n, m);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<Index> pick_item(0, m - 1);
  for (Index u = 0; u < n; ++u)
    for (int k = 0; k < 5; ++k) {
      const Index i = pick_item(rng);
      log.append({1, u, i, theta(u, i) + noise(rng)});
    }
  Hyperparams hp;
  hp.rank = rank;
  const RewardMatrix prior = RewardMatrix::Zero(n, m);
  t0 = clock::now();
  std::size_t sweeps = 0;
  for (int k = 0; k < reps; ++k) sweeps = als_least_squares(log, hp, prior, rng).objective.size() - 1;
  const double als_ms = ms(clock::now() - t0) / reps;

  std::cout << "instance " << n << "x" << m << " rank " << rank << ", " << reps << " reps\n";
  std::cout << "solve_exact: " << format_real(flow_ms) << " ms (value " << format_real(value) << ")\n";
  std::cout << "als_least_squares: " << format_real(als_ms) << " ms (" << sweeps << " sweeps)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank combinatorial bandit simulator"};
  app.require_subcommand(1);

  std::string config_path, out;
  int seeds = 0, threads = 0;
  auto* run = app.add_subcommand("run", "run an experiment config and write the CSV log");
  run->add_option("--config", config_path, "experiment config (JSON)")->required();
  run->add_option("--out", out, "output CSV path");
  run->add_option("--seeds", seeds, "number of seeds")->check(CLI::PositiveNumber);
  run->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  std::string theta_path, cap_path, demand_path;
  auto* oracle = app.add_subcommand("oracle", "exact allocation for one instance");
  oracle->add_option("--theta", theta_path, "reward matrix CSV, one user per row")->required();
  oracle->add_option("--capacities", cap_path, "item capacities CSV")->required();
  oracle->add_option("--demands", demand_path, "user demands CSV")->required();

  Index n = 200, m = 100, rank = 5;
  int reps = 3;
  std::uint64_t bench_seed = 1;
  auto* bench = app.add_subcommand("bench", "time the flow solver and ALS");
  bench->add_option("--users", n)->check(CLI::PositiveNumber);
  bench->add_option("--items", m)->check(CLI::PositiveNumber);
  bench->add_option("--rank", rank)->check(CLI::PositiveNumber);
  bench->add_option("--reps", reps)->check(CLI::PositiveNumber);
  bench->add_option("--seed", bench_seed);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config_path, out, seeds, threads);
    if (*oracle) return cmd_oracle(theta_path, cap_path, demand_path);
    if (*bench) return cmd_bench(n, m, rank, reps, bench_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
