// SPDX-License-Identifier: Apache-2.0
//
// subsearch: run, sweep, bench and protocol-check from the command line.
#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "subsearch/config.hpp"
#include "subsearch/errors.hpp"
#include "subsearch/external_objective.hpp"
#include "subsearch/harness.hpp"

namespace {

using namespace subsearch;

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::uint64_t> budget;
  std::optional<std::size_t> d;
  std::optional<std::string> proj;
  std::optional<std::string> init;
  std::optional<std::size_t> tokens;
};

void add_common_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--out", o.out, "output directory for trace.jsonl and report.json");
  cmd->add_option("--budget", o.budget, "evaluation budget");
  cmd->add_option("--d", o.d, "subspace dimension");
  cmd->add_option("--proj", o.proj, "projection kind")->check(CLI::IsMember({"pca", "prior", "n01", "n01d"}));
  cmd->add_option("--init", o.init, "initialization mode")->check(CLI::IsMember({"cond", "random"}));
  cmd->add_option("--tokens", o.tokens, "pseudo-word token count")->check(CLI::IsMember({"1", "2", "3"}));
}

RunConfig resolve(const Overrides& o) {
  LoadedConfig loaded = o.config_path.empty() ? parse_config("") : load_config(o.config_path);
  RunConfig c = loaded.config;
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out_dir = *o.out;
  if (o.budget) c.cma.budget = *o.budget;
  if (o.d) c.projection.d = *o.d;
  if (o.proj) c.projection.kind = parse_projection_kind(*o.proj);
  if (o.init) c.init.mode = parse_init_mode(*o.init);
  if (o.tokens) c.tokens = *o.tokens;
  for (const std::string& w : validate(c)) fmt::print(stderr, "warning: {}\n", w);
  return c;
}

int report_failure(const StageError& e) {
  std::cout << to_json(e.partial()).dump(2) << "\n";
  fmt::print(stderr, "error: {}\n", e.what());
  return 2;
}

int cmd_run(const Overrides& o) {
  try {
    const RunReport report = run_experiment(resolve(o));
    std::cout << to_json(report).dump(2) << "\n";
  } catch (const StageError& e) {
    return report_failure(e);
  }
  return 0;
}

int cmd_sweep(const Overrides& o, const std::string& axis) {
  const SweepResult sweep = run_sweep(resolve(o), parse_sweep_axis(axis));
  std::cout << to_json(sweep).dump(2) << "\n";
  for (const SweepRow& row : sweep.rows) {
    fmt::print(stderr, "{:>20}  {:>8}  f*={:<24.17g} evals_to_target={}\n", row.value, row.report.status,
               row.report.f_star,
               row.report.evals_to_target ? std::to_string(*row.report.evals_to_target) : std::string("-"));
  }
  return 0;
}

struct BenchArgs {
  std::string name = "sphere";
  std::size_t intrinsic_dim = 8;
  std::size_t ambient_dim = 8;
  std::string projection = "identity";
};

int cmd_bench(const Overrides& o, const BenchArgs& b) {
  Overrides without_proj = o;
  without_proj.proj.reset();
  RunConfig c = o.config_path.empty() ? RunConfig{} : load_config(o.config_path).config;
  c.objective = ObjectiveKind::kBenchmark;
  c.benchmark.kind = parse_benchmark_kind(b.name);
  c.benchmark.intrinsic_dim = b.intrinsic_dim;
  c.benchmark.ambient_dim = b.ambient_dim;
  c.projection.kind = parse_projection_kind(o.proj ? *o.proj : b.projection);
  if (c.projection.kind == ProjectionKind::kPriorNorm && !c.projection.sigma_e) c.projection.sigma_e = 1.0;
  if (c.cma.budget == RunConfig{}.cma.budget) c.cma.budget = 50000;
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out_dir = *o.out;
  if (o.budget) c.cma.budget = *o.budget;
  if (o.d) c.projection.d = *o.d;
  for (const std::string& w : validate(c)) fmt::print(stderr, "warning: {}\n", w);
  try {
    std::cout << to_json(run_experiment(c)).dump(2) << "\n";
  } catch (const StageError& e) {
    return report_failure(e);
  }
  return 0;
}

// Sends two requests to the child and checks the replies against the sphere.
int cmd_protocol_check(const std::string& command, std::size_t dim, bool expect_sphere) {
  ExternalObjective objective(command, dim, std::chrono::milliseconds(10000));
  bool ok = true;
  for (std::uint64_t round = 0; round < 2; ++round) {
    std::vector<Vector> candidates;
    for (std::size_t i = 0; i < 3; ++i) {
      Vector c = Vector::Zero(static_cast<Eigen::Index>(dim));
      c[static_cast<Eigen::Index>(i % dim)] = static_cast<double>(i) + 0.5 * static_cast<double>(round);
      candidates.push_back(c);
    }
    const NoiseKey key{round + 1, round + 2};
    std::vector<double> fitness;
    try {
      fitness = objective.batch_evaluate(candidates, key);
    } catch (const EvaluationError& e) {
      fmt::print("request {}: {}\nprotocol-check: FAIL\n", round, e.what());
      return 1;
    }
    for (std::size_t i = 0; i < fitness.size(); ++i) {
      const double expected = candidates[i].squaredNorm();
      const bool match = !expect_sphere || std::abs(fitness[i] - expected) <= 1e-12 * std::max(1.0, expected);
      fmt::print("request {} candidate {}: fitness {:.17g}{}\n", round, i, fitness[i],
                 expect_sphere ? (match ? " (matches sphere)" : fmt::format(" (expected {:.17g})", expected)) : "");
      ok = ok && match;
    }
  }
  fmt::print("{}\n", ok ? "protocol-check: PASS" : "protocol-check: FAIL");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-free pseudo-token search in a low-dimensional subspace"};
  app.require_subcommand(1);

  Overrides run_o, sweep_o, bench_o;
  auto* run = app.add_subcommand("run", "run one experiment and print its report");
  add_common_flags(run, run_o);

  auto* sweep = app.add_subcommand("sweep", "run one experiment per value of an axis");
  add_common_flags(sweep, sweep_o);
  std::string axis = "projection";
  sweep->add_option("--axis", axis, "projection | d | tokens | init")
      ->check(CLI::IsMember({"projection", "d", "tokens", "init"}));

  auto* bench = app.add_subcommand("bench", "optimize a benchmark function");
  add_common_flags(bench, bench_o);
  BenchArgs bench_args;
  bench->add_option("--name", bench_args.name, "sphere | rosenbrock | rastrigin")
      ->check(CLI::IsMember({"sphere", "rosenbrock", "rastrigin"}));
  bench->add_option("--intrinsic-dim", bench_args.intrinsic_dim, "dimension d* of the test function");
  bench->add_option("--ambient-dim", bench_args.ambient_dim, "dimension D the function is embedded in");

  auto* check = app.add_subcommand("protocol-check", "exercise an external objective command");
  std::string command;
  std::size_t dim = 4;
  bool expect_sphere = false;
  check->add_option("command", command, "shell command that starts the objective")->required();
  check->add_option("--dim", dim, "candidate length");
  check->add_flag("--expect-sphere", expect_sphere, "compare fitness with |candidate|^2");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(run_o);
    if (*sweep) return cmd_sweep(sweep_o, axis);
    if (*bench) return cmd_bench(bench_o, bench_args);
    if (*check) return cmd_protocol_check(command, dim, expect_sphere);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error{}: {}\n", e.field().empty() ? "" : fmt::format(" [{}]", e.field()), e.what());
    return 64;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
