// SPDX-License-Identifier: Apache-2.0
//
// End-to-end runs: build the objective, pick e0, build W_p, optimize, report.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "subsearch/cmaes.hpp"
#include "subsearch/config.hpp"

namespace subsearch {

/// Seeds of every random component of a run, all derived from the master seed so that
/// runs differing in one config axis share everything else.
struct RunSeeds {
  std::uint64_t vocab = 0;
  std::uint64_t scene = 0;
  std::uint64_t encoder = 0;
  std::uint64_t projection = 0;
  std::uint64_t init = 0;
  std::uint64_t sampling = 0;
  std::uint64_t noise = 0;
  std::uint64_t benchmark = 0;
  std::uint64_t start = 0;
};

RunSeeds derive_run_seeds(std::uint64_t master);

struct RunReport {
  std::string status = "ok";  // ok | aborted | failed
  std::string error;
  double f_star = std::numeric_limits<double>::infinity();
  std::uint64_t evals = 0;
  std::uint64_t generations = 0;
  std::optional<double> target;
  std::optional<std::uint64_t> evals_to_target;
  /// Cosine between the found embedding (tokens mean-pooled) and the hidden optimum.
  /// Absent for external objectives and for optima at the origin.
  std::optional<double> reconstruction_cosine;
  std::string config_hash;
  std::string trace_path;
  std::vector<std::string> warnings;

  // Not serialized.
  std::vector<TraceRecord> trace;
  Vector e_found;
  Vector e0;
};

nlohmann::ordered_json to_json(const RunReport& report);

/// A run failed in `stage` (vocabulary, scene, objective, init, projection, optimize, output).
/// Carries whatever the run produced before failing.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message, RunReport partial);
  const std::string& stage() const noexcept { return stage_; }
  const RunReport& partial() const noexcept { return partial_; }

 private:
  std::string stage_;
  RunReport partial_;
};

struct RunHooks {
  std::function<void(const GenerationBatch&)> on_batch;
  std::function<void(const TraceRecord&)> on_generation;
};

/// Evaluation threads: hardware concurrency, capped by SUBSEARCH_THREADS when set.
std::size_t evaluation_threads();

/// Runs one experiment. With a non-empty out_dir, writes trace.jsonl (line by line, so an
/// aborted run keeps its partial trace) and report.json there.
RunReport run_experiment(const RunConfig& config, const RunHooks& hooks = {});

enum class SweepAxis { kProjection, kDim, kTokens, kInit };

std::string_view to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(std::string_view name);

struct SweepRow {
  std::string value;
  RunReport report;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::kProjection;
  std::vector<SweepRow> rows;
};

/// One run per axis value, all with the base config's seed. A failing run becomes a row
/// with status "failed" and the sweep moves on. Outputs go to out_dir/<axis>-<value>.
SweepResult run_sweep(const RunConfig& base, SweepAxis axis);

nlohmann::ordered_json to_json(const SweepResult& sweep);

}  // namespace subsearch
