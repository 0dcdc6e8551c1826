// SPDX-License-Identifier: Apache-2.0
//
// CMA-ES over the subspace increment Q with an ask/tell interface, and the
// optimize() loop that evaluates each generation under one pinned noise key.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "subsearch/errors.hpp"
#include "subsearch/numerics.hpp"
#include "subsearch/objectives.hpp"
#include "subsearch/subspace.hpp"

namespace subsearch {

/// Strategy parameters. Defaults follow Hansen's CMA tutorial.
struct CmaParams {
  std::size_t dim = 0;
  std::size_t popsize = 0;  // K
  std::size_t mu = 0;
  Vector weights;  // mu entries, positive, non-increasing, sum 1
  double mu_eff = 0.0;
  double c_sigma = 0.0;
  double d_sigma = 0.0;
  double c_c = 0.0;
  double c_1 = 0.0;
  double c_mu = 0.0;
  double sigma0 = 0.5;
  /// Closed-form approximation of E|N(0, I)|.
  double chi_n = 0.0;
  /// Generations between eigendecompositions of C.
  std::size_t eigen_interval = 1;
};

CmaParams default_params(std::size_t dim, std::size_t popsize = 30, double sigma0 = 0.5);
/// Throws ConfigError when an invariant of CmaParams does not hold.
void validate(const CmaParams& params);

struct BestSolution {
  Vector q;
  double f = std::numeric_limits<double>::infinity();
  std::uint64_t found_at_eval = 0;
};

struct CmaState {
  Vector mean;
  double sigma = 0.0;
  Matrix cov;
  Vector p_sigma;
  Vector p_c;
  /// Eigensystem of `cov` as of the last refresh.
  SymEigResult eig;
  std::size_t eig_age = 0;
  std::uint64_t generation = 0;
  std::uint64_t evals = 0;
  BestSolution best;
  /// Candidate indices of the last tell, best first.
  std::vector<std::size_t> ranking;
};

class CmaEs {
 public:
  CmaEs(CmaParams params, Vector initial_mean);

  const CmaParams& params() const noexcept { return params_; }
  const CmaState& state() const noexcept { return state_; }

  /// K candidates m + sigma * B diag(sqrt(lambda)) z. Refreshes a stale eigensystem first.
  std::vector<Vector> ask(RngStream& rng);
  /// Ranks the candidates (ascending fitness, ties by index) and updates m, sigma, C,
  /// the evolution paths and the global best.
  void tell(std::span<const Vector> candidates, std::span<const double> fitness);

  /// max/min eigenvalue of C from the cached eigensystem.
  double condition_number() const;

 private:
  void refresh_eigensystem();

  CmaParams params_;
  CmaState state_;
};

// ---------------------------------------------------------------------------
// Optimization loop

enum class NoisePolicy { kPerGeneration, kPinnedGlobal };

std::string_view to_string(NoisePolicy policy);
NoisePolicy parse_noise_policy(std::string_view name);

struct TraceRecord {
  std::uint64_t gen = 0;
  std::uint64_t evals = 0;
  double f_best_gen = 0.0;
  double f_star = 0.0;
  double sigma = 0.0;
  double m_norm = 0.0;
  double c_cond = 0.0;
  std::int64_t ms = 0;
};

/// Everything observed for one generation; handed to OptimizeOptions::on_batch.
struct GenerationBatch {
  std::uint64_t gen = 0;
  NoiseKey key;
  std::span<const Vector> embeddings;
  std::span<const double> fitness;
};

struct OptimizeOptions {
  std::uint64_t budget = 13000;
  NoisePolicy noise_policy = NoisePolicy::kPerGeneration;
  /// When set, the result reports the first evaluation count with fitness <= target.
  std::optional<double> target;
  std::size_t threads = 1;
  /// Fill TraceRecord::ms with wall-clock time; otherwise it stays 0 so traces are reproducible.
  bool record_wall_time = false;
  std::function<void(const TraceRecord&)> on_generation;
  std::function<void(const GenerationBatch&)> on_batch;
};

struct OptimizeResult {
  Vector q_star;
  Vector e_star;
  double f_star = std::numeric_limits<double>::infinity();
  std::uint64_t evals = 0;
  std::optional<std::uint64_t> evals_to_target;
  std::vector<TraceRecord> trace;
};

/// An evaluation failure during optimize(). Carries the generations completed before it.
class OptimizationAborted : public EvaluationError {
 public:
  OptimizationAborted(const std::string& message, std::vector<TraceRecord> partial_trace)
      : EvaluationError(message), partial_trace_(std::move(partial_trace)) {}
  const std::vector<TraceRecord>& partial_trace() const noexcept { return partial_trace_; }

 private:
  std::vector<TraceRecord> partial_trace_;
};

/// Evaluates candidates in order, using up to `threads` workers when the objective allows it.
std::vector<double> evaluate_batch(const Objective& objective, std::span<const Vector> embeddings,
                                   const NoiseKey& key, std::size_t threads);

/// Runs CMA-ES on Q, starting at Q = 0, with candidates mapped to e = e0 + W_p Q. Every
/// generation draws (or reuses, for the pinned policy) one noise key and evaluates all
/// K candidates under it. Stops once another generation would exceed the budget.
OptimizeResult optimize(const Objective& objective, const Vector& e0, const Projection& projection,
                        const CmaParams& params, const OptimizeOptions& options, RngStream& sampling_rng,
                        RngStream& noise_rng);

}  // namespace subsearch
