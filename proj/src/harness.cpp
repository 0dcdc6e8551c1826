// SPDX-License-Identifier: Apache-2.0
#include "subsearch/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <thread>

#include <fmt/format.h>

#include "subsearch/errors.hpp"
#include "subsearch/external_objective.hpp"
#include "subsearch/fixtures.hpp"
#include "subsearch/initialization.hpp"
#include "subsearch/subspace.hpp"
#include "subsearch/trace.hpp"

namespace subsearch {
namespace {

namespace fs = std::filesystem;

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

// Everything the optimizer needs, built stage by stage.
struct Pipeline {
  std::optional<VocabularyTable> vocab;
  std::optional<SurrogateScene> scene;
  std::unique_ptr<Objective> objective;
  std::size_t token_dim = 0;
  Vector e0;
  Projection projection;
};

template <typename Fn>
auto staged(const char* stage, RunReport& report, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    report.status = "failed";
    report.error = fmt::format("{}: {}", stage, e.what());
    throw StageError(stage, e.what(), report);
  }
}

std::size_t ambient_dim(const RunConfig& c) {
  switch (c.objective) {
    case ObjectiveKind::kSurrogate: return c.vocab.dim;
    case ObjectiveKind::kBenchmark: return c.benchmark.ambient_dim;
    case ObjectiveKind::kExternal: return c.external.dim != 0 ? c.external.dim : c.vocab.dim;
  }
  return 0;
}

bool needs_vocabulary(const RunConfig& c) {
  if (c.objective == ObjectiveKind::kSurrogate) return true;
  if (c.objective == ObjectiveKind::kBenchmark) return false;
  return c.init.mode == InitMode::kRandomToken || c.projection.kind == ProjectionKind::kPca ||
         (c.projection.kind == ProjectionKind::kPriorNorm && !c.projection.sigma_e);
}

Vector initial_embedding(const RunConfig& c, const RunSeeds& seeds, const Pipeline& p) {
  const std::size_t D = p.token_dim;
  Vector single(static_cast<Eigen::Index>(D));
  if (c.init.mode == InitMode::kGivenVector) {
    single = Eigen::Map<const Vector>(c.init.vector.data(), static_cast<Eigen::Index>(c.init.vector.size()));
  } else if (c.objective == ObjectiveKind::kBenchmark) {
    // Benchmarks have no vocabulary; both non-vector modes start from a uniform draw.
    RngStream rng(seeds.start, 0);
    for (Eigen::Index i = 0; i < single.size(); ++i) {
      single[i] = c.benchmark.start_scale * (2.0 * rng.uniform() - 1.0);
    }
  } else if (c.init.mode == InitMode::kConditioned) {
    const ToyEncoder encoder(seeds.encoder, D, c.init.encoder_dim);
    const InitConfig init{c.init.prompt_template, c.init.temperature, c.init.mode};
    single = conditioned_init(*p.scene, *p.vocab, init, encoder);
  } else {
    single = random_token_init(*p.vocab, seeds.init);
  }
  return single.replicate(static_cast<Eigen::Index>(c.tokens), 1).eval();
}

Projection build_projection(const RunConfig& c, const RunSeeds& seeds, const Pipeline& p) {
  const std::size_t D = p.token_dim;
  switch (c.projection.kind) {
    case ProjectionKind::kIdentity: return identity_projection(D);
    case ProjectionKind::kPca: return build_pca_projection(*p.vocab, c.projection.d);
    case ProjectionKind::kRandomN01:
    case ProjectionKind::kRandomN01OverD:
      return build_random_projection(D, c.projection.d, c.projection.kind, seeds.projection);
    case ProjectionKind::kPriorNorm: {
      PriorNormSpec spec;
      spec.lambda = c.projection.lambda;
      spec.sigma_e = c.projection.sigma_e ? *c.projection.sigma_e : p.vocab->sigma_e();
      spec.sigma_q = c.cma.sigma0;
      spec.d = c.projection.d;
      return build_prior_norm_projection(spec, D, seeds.projection);
    }
  }
  throw InternalError("unhandled projection kind");
}

std::optional<double> reconstruction(const RunConfig& c, const Pipeline& p, const Vector& e_found) {
  if (c.objective == ObjectiveKind::kExternal) return std::nullopt;
  Vector target;
  if (p.scene) {
    target = p.scene->e_star;
  } else if (auto opt = p.objective->known_optimum()) {
    target = *opt;
  } else {
    return std::nullopt;
  }
  if (target.norm() == 0.0) return std::nullopt;
  const Vector found = pool_tokens(e_found, static_cast<std::size_t>(target.size()));
  if (found.norm() == 0.0) return std::nullopt;
  return cosine_similarity(found, target);
}

void write_report(const RunReport& report, const fs::path& out) {
  save_json(to_json(report), out / "report.json");
}

}  // namespace

RunSeeds derive_run_seeds(std::uint64_t master) {
  RunSeeds s;
  s.vocab = derive_seed(master, "vocab");
  s.scene = derive_seed(master, "scene");
  s.encoder = derive_seed(master, "encoder");
  s.projection = derive_seed(master, "projection");
  s.init = derive_seed(master, "init");
  s.sampling = derive_seed(master, "sampling");
  s.noise = derive_seed(master, "noise");
  s.benchmark = derive_seed(master, "benchmark");
  s.start = derive_seed(master, "start");
  return s;
}

StageError::StageError(std::string stage, const std::string& message, RunReport partial)
    : std::runtime_error(fmt::format("{} stage failed: {}", stage, message)),
      stage_(std::move(stage)),
      partial_(std::move(partial)) {}

nlohmann::ordered_json to_json(const RunReport& r) {
  nlohmann::ordered_json j;
  j["status"] = r.status;
  j["f_star"] = optional_json(r.f_star);
  j["evals"] = r.evals;
  j["generations"] = r.generations;
  j["target"] = optional_json(r.target);
  j["evals_to_target"] = r.evals_to_target ? nlohmann::ordered_json(*r.evals_to_target) : nullptr;
  if (r.reconstruction_cosine) j["reconstruction_cosine"] = *r.reconstruction_cosine;
  j["config_hash"] = r.config_hash;
  j["trace_path"] = r.trace_path;
  if (!r.warnings.empty()) j["warnings"] = r.warnings;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

std::size_t evaluation_threads() {
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SUBSEARCH_THREADS"); env != nullptr && *env != '\0') {
    std::size_t cap = 0;
    const std::string_view text(env);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), cap);
    if (ec != std::errc() || ptr != text.data() + text.size() || cap == 0) {
      throw ConfigError(fmt::format("SUBSEARCH_THREADS='{}' is not a positive integer", text), "SUBSEARCH_THREADS");
    }
    threads = std::min(threads, cap);
  }
  return threads;
}

RunReport run_experiment(const RunConfig& config, const RunHooks& hooks) {
  RunReport report;
  report.warnings = staged("config", report, [&] { return validate(config); });
  report.config_hash = config_hash(config);
  report.target = default_target(config);
  const RunSeeds seeds = derive_run_seeds(config.seed);

  Pipeline p;
  p.token_dim = ambient_dim(config);

  if (needs_vocabulary(config)) {
    staged("vocabulary", report, [&] {
      p.vocab.emplace(build_vocabulary(seeds.vocab, config.vocab.size, config.vocab.dim, config.vocab.options));
    });
  }
  if (config.objective == ObjectiveKind::kSurrogate) {
    staged("scene", report, [&] {
      SceneOptions opts;
      opts.images = config.surrogate.images;
      opts.eta = config.surrogate.eta;
      opts.concept_kind = config.surrogate.concept_kind;
      opts.mixture_size = config.surrogate.mixture_size;
      opts.image_dim = config.surrogate.image_dim;
      p.scene.emplace(generate_scene(seeds.scene, *p.vocab, opts));
    });
  }
  staged("objective", report, [&] {
    switch (config.objective) {
      case ObjectiveKind::kSurrogate:
        p.objective = std::make_unique<SurrogateObjective>(*p.scene, config.surrogate.batch, config.tokens);
        break;
      case ObjectiveKind::kBenchmark:
        p.objective = std::make_unique<BenchmarkObjective>(config.benchmark.kind, config.benchmark.intrinsic_dim,
                                                           config.benchmark.ambient_dim, seeds.benchmark);
        break;
      case ObjectiveKind::kExternal:
        p.objective = std::make_unique<ExternalObjective>(config.external.command, p.token_dim * config.tokens,
                                                          std::chrono::milliseconds(config.external.timeout_ms));
        break;
    }
  });
  p.e0 = staged("init", report, [&] { return initial_embedding(config, seeds, p); });
  report.e0 = p.e0;
  p.projection = staged("projection", report, [&] { return build_projection(config, seeds, p); });

  const fs::path out_dir = config.out_dir;
  std::unique_ptr<TraceWriter> writer;
  if (!out_dir.empty()) {
    staged("output", report, [&] {
      writer = std::make_unique<TraceWriter>(out_dir / "trace.jsonl");
      report.trace_path = writer->path().string();
    });
  }

  const CmaParams params = staged("optimize", report, [&] {
    return default_params(config.tokens * p.projection.subspace_dim(), config.cma.popsize, config.cma.sigma0);
  });
  OptimizeOptions options;
  options.budget = config.cma.budget;
  options.noise_policy = config.noise_policy;
  options.target = report.target;
  options.threads = staged("optimize", report, [] { return evaluation_threads(); });
  options.record_wall_time = config.trace_wall_time;
  options.on_batch = hooks.on_batch;
  options.on_generation = [&](const TraceRecord& record) {
    if (writer) writer->append(record);
    if (hooks.on_generation) hooks.on_generation(record);
  };

  RngStream sampling_rng(seeds.sampling, 0);
  RngStream noise_rng(seeds.noise, 0);
  OptimizeResult result;
  try {
    result = optimize(*p.objective, p.e0, p.projection, params, options, sampling_rng, noise_rng);
  } catch (const OptimizationAborted& e) {
    report.status = "aborted";
    report.error = fmt::format("optimize: {}", e.what());
    report.trace = e.partial_trace();
    report.generations = report.trace.size();
    if (!report.trace.empty()) {
      report.f_star = report.trace.back().f_star;
      report.evals = report.trace.back().evals;
    }
    writer.reset();
    if (!out_dir.empty()) write_report(report, out_dir);
    throw StageError("optimize", e.what(), report);
  } catch (const std::exception& e) {
    report.status = "failed";
    report.error = fmt::format("optimize: {}", e.what());
    writer.reset();
    if (!out_dir.empty()) write_report(report, out_dir);
    throw StageError("optimize", e.what(), report);
  }
  writer.reset();

  report.f_star = result.f_star;
  report.evals = result.evals;
  report.generations = result.trace.size();
  report.evals_to_target = result.evals_to_target;
  report.trace = std::move(result.trace);
  report.e_found = result.e_star;
  report.reconstruction_cosine = reconstruction(config, p, result.e_star);

  if (!out_dir.empty()) staged("output", report, [&] { write_report(report, out_dir); });
  return report;
}

std::string_view to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kProjection: return "projection";
    case SweepAxis::kDim: return "d";
    case SweepAxis::kTokens: return "tokens";
    case SweepAxis::kInit: return "init";
  }
  return "unknown";
}

SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "projection" || name == "proj") return SweepAxis::kProjection;
  if (name == "d" || name == "dim") return SweepAxis::kDim;
  if (name == "tokens") return SweepAxis::kTokens;
  if (name == "init") return SweepAxis::kInit;
  throw ConfigError(fmt::format("unknown sweep axis '{}' (projection, d, tokens, init)", name), "axis");
}

SweepResult run_sweep(const RunConfig& base, SweepAxis axis) {
  std::vector<std::pair<std::string, RunConfig>> runs;
  switch (axis) {
    case SweepAxis::kProjection:
      for (ProjectionKind kind : {ProjectionKind::kPriorNorm, ProjectionKind::kPca, ProjectionKind::kRandomN01,
                                  ProjectionKind::kRandomN01OverD}) {
        RunConfig c = base;
        c.projection.kind = kind;
        runs.emplace_back(std::string(to_string(kind)), c);
      }
      break;
    case SweepAxis::kDim:
      for (std::size_t d : base.d_sweep) {
        RunConfig c = base;
        c.projection.d = d;
        runs.emplace_back(std::to_string(d), c);
      }
      break;
    case SweepAxis::kTokens:
      for (std::size_t k : {1u, 2u, 3u}) {
        RunConfig c = base;
        c.tokens = k;
        runs.emplace_back(std::to_string(k), c);
      }
      break;
    case SweepAxis::kInit:
      for (InitMode mode : {InitMode::kConditioned, InitMode::kRandomToken}) {
        RunConfig c = base;
        c.init.mode = mode;
        runs.emplace_back(std::string(to_string(mode)), c);
      }
      break;
  }

  SweepResult sweep;
  sweep.axis = axis;
  for (auto& [value, config] : runs) {
    if (!base.out_dir.empty()) {
      config.out_dir = (fs::path(base.out_dir) / fmt::format("{}-{}", to_string(axis), value)).string();
    }
    SweepRow row;
    row.value = value;
    try {
      row.report = run_experiment(config);
    } catch (const StageError& e) {
      row.report = e.partial();
      if (row.report.error.empty()) row.report.error = e.what();
      if (row.report.status == "ok") row.report.status = "failed";
    } catch (const std::exception& e) {
      row.report.status = "failed";
      row.report.error = e.what();
    }
    sweep.rows.push_back(std::move(row));
  }
  return sweep;
}

nlohmann::ordered_json to_json(const SweepResult& sweep) {
  nlohmann::ordered_json j;
  j["axis"] = to_string(sweep.axis);
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const SweepRow& row : sweep.rows) {
    nlohmann::ordered_json r;
    r["value"] = row.value;
    r["report"] = to_json(row.report);
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);
  return j;
}

}  // namespace subsearch
