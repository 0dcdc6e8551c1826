// SPDX-License-Identifier: Apache-2.0
#include "subsearch/cmaes.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include <fmt/format.h>

namespace subsearch {
namespace {

constexpr double kEigenFloor = 1e-20;

}  // namespace

CmaParams default_params(std::size_t dim, std::size_t popsize, double sigma0) {
  if (dim == 0) throw ConfigError("cma: dimension must be >= 1", "cma.dim");
  if (popsize < 4) throw ConfigError(fmt::format("cma: popsize {} < 4", popsize), "cma.popsize");
  if (!(sigma0 > 0.0) || !std::isfinite(sigma0)) throw ConfigError("cma: sigma0 must be positive", "cma.sigma0");

  CmaParams p;
  const double n = static_cast<double>(dim);
  p.dim = dim;
  p.popsize = popsize;
  p.mu = popsize / 2;
  p.sigma0 = sigma0;
  p.weights.resize(static_cast<Eigen::Index>(p.mu));
  const double base = std::log((static_cast<double>(popsize) + 1.0) / 2.0);
  for (std::size_t i = 0; i < p.mu; ++i) {
    p.weights(static_cast<Eigen::Index>(i)) = base - std::log(static_cast<double>(i + 1));
  }
  p.weights /= p.weights.sum();
  p.mu_eff = 1.0 / p.weights.squaredNorm();

  p.c_sigma = (p.mu_eff + 2.0) / (n + p.mu_eff + 5.0);
  p.d_sigma = 1.0 + 2.0 * std::max(0.0, std::sqrt((p.mu_eff - 1.0) / (n + 1.0)) - 1.0) + p.c_sigma;
  p.c_c = (4.0 + p.mu_eff / n) / (n + 4.0 + 2.0 * p.mu_eff / n);
  p.c_1 = 2.0 / ((n + 1.3) * (n + 1.3) + p.mu_eff);
  p.c_mu = std::min(1.0 - p.c_1, 2.0 * (p.mu_eff - 2.0 + 1.0 / p.mu_eff) / ((n + 2.0) * (n + 2.0) + p.mu_eff));
  p.chi_n = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
  p.eigen_interval = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(1.0 / (10.0 * n * (p.c_1 + p.c_mu)))));
  validate(p);
  return p;
}

void validate(const CmaParams& p) {
  auto fail = [](const std::string& what, const char* field) { throw ConfigError("cma: " + what, field); };
  if (p.dim == 0) fail("dimension must be >= 1", "cma.dim");
  if (p.popsize < 4) fail("popsize must be >= 4", "cma.popsize");
  if (p.mu < 1 || 2 * p.mu > p.popsize) fail("need 1 <= mu <= popsize/2", "cma.mu");
  if (static_cast<std::size_t>(p.weights.size()) != p.mu) fail("weights must have mu entries", "cma.weights");
  if ((p.weights.array() <= 0.0).any()) fail("weights must be positive", "cma.weights");
  for (Eigen::Index i = 1; i < p.weights.size(); ++i) {
    if (p.weights(i) > p.weights(i - 1)) fail("weights must be non-increasing", "cma.weights");
  }
  if (std::abs(p.weights.sum() - 1.0) > 1e-12) fail("weights must sum to 1", "cma.weights");
  for (const double rate : {p.c_sigma, p.c_c, p.c_1, p.c_mu}) {
    if (!(rate > 0.0 && rate <= 1.0)) fail("adaptation rates must lie in (0, 1]", "cma.rates");
  }
  if (p.c_1 + p.c_mu > 1.0) fail("c_1 + c_mu must not exceed 1", "cma.rates");
  if (!(p.d_sigma > 0.0)) fail("d_sigma must be positive", "cma.d_sigma");
  if (!(p.sigma0 > 0.0)) fail("sigma0 must be positive", "cma.sigma0");
  if (p.eigen_interval == 0) fail("eigen_interval must be >= 1", "cma.eigen_interval");
}

CmaEs::CmaEs(CmaParams params, Vector initial_mean) : params_(std::move(params)) {
  validate(params_);
  if (static_cast<std::size_t>(initial_mean.size()) != params_.dim) {
    throw DomainError(fmt::format("CmaEs: initial mean has length {}, expected {}", initial_mean.size(), params_.dim));
  }
  const auto n = static_cast<Eigen::Index>(params_.dim);
  state_.mean = std::move(initial_mean);
  state_.sigma = params_.sigma0;
  state_.cov = Matrix::Identity(n, n);
  state_.p_sigma = Vector::Zero(n);
  state_.p_c = Vector::Zero(n);
  state_.eig = {Vector::Ones(n), Matrix::Identity(n, n)};
}

void CmaEs::refresh_eigensystem() {
  state_.cov = 0.5 * (state_.cov + state_.cov.transpose()).eval();
  SymEigResult eig = eig_sym(state_.cov);
  const double top = eig.eigenvalues(0);
  if (!(top > 0.0) || !std::isfinite(top)) throw InternalError("CmaEs: covariance lost positive definiteness");
  const double floor = kEigenFloor * top;
  if ((eig.eigenvalues.array() < floor).any()) {
    eig.eigenvalues = eig.eigenvalues.cwiseMax(floor);
    state_.cov = eig.eigenvectors * eig.eigenvalues.asDiagonal() * eig.eigenvectors.transpose();
    state_.cov = 0.5 * (state_.cov + state_.cov.transpose()).eval();
  }
  state_.eig = std::move(eig);
  state_.eig_age = 0;
}

double CmaEs::condition_number() const {
  return state_.eig.eigenvalues.maxCoeff() / state_.eig.eigenvalues.minCoeff();
}

std::vector<Vector> CmaEs::ask(RngStream& rng) {
  if (state_.eig_age >= params_.eigen_interval) refresh_eigensystem();
  const Vector scales = state_.eig.eigenvalues.cwiseSqrt();
  std::vector<Vector> candidates;
  candidates.reserve(params_.popsize);
  for (std::size_t k = 0; k < params_.popsize; ++k) {
    const Vector z = normal_sample(rng, params_.dim);
    candidates.push_back(state_.mean + state_.sigma * (state_.eig.eigenvectors * scales.cwiseProduct(z)));
  }
  return candidates;
}

void CmaEs::tell(std::span<const Vector> candidates, std::span<const double> fitness) {
  const std::size_t k = params_.popsize;
  if (candidates.size() != k || fitness.size() != k) {
    throw DomainError(fmt::format("CmaEs::tell: expected {} candidates and fitness values, got {} and {}", k,
                                  candidates.size(), fitness.size()));
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (static_cast<std::size_t>(candidates[i].size()) != params_.dim) {
      throw DomainError(fmt::format("CmaEs::tell: candidate {} has wrong length", i));
    }
    if (!std::isfinite(fitness[i])) {
      throw EvaluationError(fmt::format("non-finite fitness {} for candidate {}", fitness[i], i));
    }
  }

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fitness[a] < fitness[b]; });

  const auto n = static_cast<Eigen::Index>(params_.dim);
  const Vector old_mean = state_.mean;
  const double sigma = state_.sigma;

  Vector new_mean = Vector::Zero(n);
  Matrix steps(n, static_cast<Eigen::Index>(params_.mu));  // y_i = (x_i - m) / sigma, best first
  for (std::size_t i = 0; i < params_.mu; ++i) {
    const Vector& x = candidates[order[i]];
    new_mean += params_.weights(static_cast<Eigen::Index>(i)) * x;
    steps.col(static_cast<Eigen::Index>(i)) = (x - old_mean) / sigma;
  }
  const Vector mean_step = (new_mean - old_mean) / sigma;

  // C^{-1/2} y_w from the cached eigensystem.
  const Matrix& basis = state_.eig.eigenvectors;
  const Vector whitened =
      basis * (basis.transpose() * mean_step).cwiseQuotient(state_.eig.eigenvalues.cwiseSqrt());

  const double cs = params_.c_sigma;
  state_.p_sigma = (1.0 - cs) * state_.p_sigma + std::sqrt(cs * (2.0 - cs) * params_.mu_eff) * whitened;

  const double ps_norm = state_.p_sigma.norm();
  const double generations = static_cast<double>(state_.generation + 1);
  const double bias = std::sqrt(1.0 - std::pow(1.0 - cs, 2.0 * generations));
  const double stall_threshold = (1.4 + 2.0 / (static_cast<double>(params_.dim) + 1.0)) * params_.chi_n;
  const double h_sigma = ps_norm / bias < stall_threshold ? 1.0 : 0.0;

  const double cc = params_.c_c;
  state_.p_c = (1.0 - cc) * state_.p_c + h_sigma * std::sqrt(cc * (2.0 - cc) * params_.mu_eff) * mean_step;

  const double c1 = params_.c_1;
  const double cmu = params_.c_mu;
  const double stall_correction = (1.0 - h_sigma) * cc * (2.0 - cc);
  Matrix rank_mu = steps * params_.weights.asDiagonal() * steps.transpose();
  state_.cov = (1.0 - c1 - cmu + c1 * stall_correction) * state_.cov + c1 * (state_.p_c * state_.p_c.transpose()) +
               cmu * rank_mu;
  state_.cov = 0.5 * (state_.cov + state_.cov.transpose()).eval();

  state_.sigma = sigma * std::exp((cs / params_.d_sigma) * (ps_norm / params_.chi_n - 1.0));
  state_.mean = new_mean;

  const std::size_t leader = order.front();
  if (fitness[leader] < state_.best.f) {
    state_.best.f = fitness[leader];
    state_.best.q = candidates[leader];
    state_.best.found_at_eval = state_.evals + leader + 1;
  }
  state_.ranking = std::move(order);
  state_.generation += 1;
  state_.evals += k;
  state_.eig_age += 1;
}

// ---------------------------------------------------------------------------

std::string_view to_string(NoisePolicy policy) {
  return policy == NoisePolicy::kPerGeneration ? "per-generation" : "pinned-global";
}

NoisePolicy parse_noise_policy(std::string_view name) {
  if (name == "per-generation") return NoisePolicy::kPerGeneration;
  if (name == "pinned-global") return NoisePolicy::kPinnedGlobal;
  throw ConfigError(fmt::format("unknown noise policy '{}'", name), "noise_policy");
}

std::vector<double> evaluate_batch(const Objective& objective, std::span<const Vector> embeddings,
                                   const NoiseKey& key, std::size_t threads) {
  const std::size_t n = embeddings.size();
  const std::size_t workers = std::min(threads, n);
  if (workers <= 1 || !objective.concurrent_evaluation()) {
    std::vector<double> out = objective.batch_evaluate(embeddings, key);
    if (out.size() != n) {
      throw EvaluationError(fmt::format("objective returned {} fitness values for {} candidates", out.size(), n));
    }
    return out;
  }
  std::vector<double> out(n);
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) out[i] = objective.evaluate(embeddings[i], key);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& error : errors) {
    if (error) std::rethrow_exception(error);
  }
  return out;
}

OptimizeResult optimize(const Objective& objective, const Vector& e0, const Projection& projection,
                        const CmaParams& params, const OptimizeOptions& options, RngStream& sampling_rng,
                        RngStream& noise_rng) {
  const auto ambient = static_cast<std::size_t>(projection.weights.rows());
  const auto sub = static_cast<std::size_t>(projection.weights.cols());
  if (ambient == 0 || static_cast<std::size_t>(e0.size()) % ambient != 0) {
    throw DomainError("optimize: e0 length is not a multiple of the projection's ambient dim");
  }
  const std::size_t tokens = static_cast<std::size_t>(e0.size()) / ambient;
  if (params.dim != tokens * sub) {
    throw DomainError(fmt::format("optimize: CMA dimension {} != tokens ({}) x subspace dim ({})", params.dim,
                                  tokens, sub));
  }
  if (objective.dim() != static_cast<std::size_t>(e0.size())) {
    throw DomainError(fmt::format("optimize: objective expects length {}, e0 has {}", objective.dim(), e0.size()));
  }
  if (options.budget < params.popsize) {
    throw ConfigError(fmt::format("optimize: budget {} is below the population size {}", options.budget,
                                  params.popsize),
                      "cma.budget");
  }

  const auto started = std::chrono::steady_clock::now();
  CmaEs es(params, Vector::Zero(static_cast<Eigen::Index>(params.dim)));
  OptimizeResult result;

  auto draw_key = [&noise_rng] {
    NoiseKey key;
    key.t_seed = noise_rng.next_u64();
    key.eps_seed = noise_rng.next_u64();
    return key;
  };
  const NoiseKey pinned = options.noise_policy == NoisePolicy::kPinnedGlobal ? draw_key() : NoiseKey{};

  while (es.state().evals + params.popsize <= options.budget) {
    const NoiseKey key = options.noise_policy == NoisePolicy::kPinnedGlobal ? pinned : draw_key();
    const std::vector<Vector> candidates = es.ask(sampling_rng);
    std::vector<Vector> embeddings;
    embeddings.reserve(candidates.size());
    for (const Vector& q : candidates) embeddings.push_back(compose(e0, projection, q));

    std::vector<double> fitness;
    try {
      fitness = evaluate_batch(objective, embeddings, key, options.threads);
      for (std::size_t i = 0; i < fitness.size(); ++i) {
        if (!std::isfinite(fitness[i])) {
          throw EvaluationError(fmt::format("non-finite fitness {} for candidate {}", fitness[i], i));
        }
      }
    } catch (const std::exception& error) {
      throw OptimizationAborted(fmt::format("optimize: generation {} evaluation failed: {}",
                                            es.state().generation + 1, error.what()),
                                std::move(result.trace));
    }

    if (options.on_batch) options.on_batch({es.state().generation + 1, key, embeddings, fitness});
    if (options.target && !result.evals_to_target) {
      for (std::size_t i = 0; i < fitness.size(); ++i) {
        if (fitness[i] <= *options.target) {
          result.evals_to_target = es.state().evals + i + 1;
          break;
        }
      }
    }

    es.tell(candidates, fitness);

    const CmaState& state = es.state();
    TraceRecord record;
    record.gen = state.generation;
    record.evals = state.evals;
    record.f_best_gen = fitness[state.ranking.front()];
    record.f_star = state.best.f;
    record.sigma = state.sigma;
    record.m_norm = state.mean.norm();
    record.c_cond = es.condition_number();
    if (options.record_wall_time) {
      record.ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started)
                      .count();
    }
    result.trace.push_back(record);
    if (options.on_generation) options.on_generation(record);
  }

  result.q_star = es.state().best.q;
  result.e_star = compose(e0, projection, result.q_star);
  result.f_star = es.state().best.f;
  result.evals = es.state().evals;
  return result;
}

}  // namespace subsearch
