// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: a JSON document whose keys mirror RunConfig. Every key is
// optional; unknown keys are rejected. See README.md for the full key set.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "subsearch/cmaes.hpp"
#include "subsearch/initialization.hpp"
#include "subsearch/objectives.hpp"
#include "subsearch/subspace.hpp"

namespace subsearch {

enum class ObjectiveKind { kSurrogate, kBenchmark, kExternal };

struct SurrogateSpec {
  std::size_t images = 5;
  double eta = 0.01;
  ConceptKind concept_kind = ConceptKind::kTokenMixture;
  std::size_t mixture_size = 3;
  std::size_t image_dim = 0;
  /// (image, noise) pairs averaged per fitness evaluation.
  std::size_t batch = 20;
};

struct BenchmarkSpec {
  BenchmarkKind kind = BenchmarkKind::kSphere;
  std::size_t intrinsic_dim = 8;
  std::size_t ambient_dim = 8;
  /// The start point e0 is drawn uniformly from [-start_scale, start_scale]^D.
  double start_scale = 1.0;
};

struct ExternalSpec {
  std::string command;
  /// Embedding length per token; 0 means the vocabulary dim.
  std::size_t dim = 0;
  std::int64_t timeout_ms = 30000;
};

struct VocabSpec {
  std::size_t size = 1000;
  std::size_t dim = 768;
  VocabularyOptions options;
};

struct InitSpec {
  InitMode mode = InitMode::kConditioned;
  PromptTemplate prompt_template = PromptTemplate::kPhotoOf;
  double temperature = 1.0;
  std::size_t encoder_dim = 32;
  /// Used by the given-vector mode; one token's worth, repeated for every token.
  std::vector<double> vector;
};

struct ProjectionSpec {
  ProjectionKind kind = ProjectionKind::kPriorNorm;
  std::size_t d = 256;
  double lambda = 1.0;
  /// Overrides the vocabulary sigma_e for prior-norm (required for benchmarks).
  std::optional<double> sigma_e;
};

struct CmaSpec {
  std::size_t popsize = 30;
  double sigma0 = 0.5;
  std::uint64_t budget = 13000;
};

struct RunConfig {
  ObjectiveKind objective = ObjectiveKind::kSurrogate;
  SurrogateSpec surrogate;
  BenchmarkSpec benchmark;
  ExternalSpec external;
  VocabSpec vocab;
  InitSpec init;
  ProjectionSpec projection;
  std::size_t tokens = 1;
  CmaSpec cma;
  NoisePolicy noise_policy = NoisePolicy::kPerGeneration;
  /// Fitness threshold for evals_to_target; unset means the objective's default.
  std::optional<double> target;
  std::uint64_t seed = 0;
  std::vector<std::size_t> d_sweep = {64, 256, 512};
  /// Output directory for trace.jsonl and report.json; empty disables file output.
  std::string out_dir;
  bool trace_wall_time = false;
};

struct LoadedConfig {
  RunConfig config;
  std::vector<std::string> warnings;
};

/// Parses a config document. Whitespace-only text yields all defaults. Errors name the
/// offending field (ConfigError::field) or, for syntax errors, the line.
LoadedConfig parse_config(std::string_view text, std::string_view source = "<config>");
LoadedConfig load_config(const std::filesystem::path& path);

/// Checks cross-field constraints; returns warnings for tolerated deviations.
std::vector<std::string> validate(const RunConfig& config);

/// Canonical JSON form of a config (all keys, defaults filled in).
nlohmann::ordered_json to_json(const RunConfig& config);
/// Hex FNV-1a digest of the canonical JSON.
std::string config_hash(const RunConfig& config);

/// Default evals_to_target threshold for the configured objective, if any.
std::optional<double> default_target(const RunConfig& config);

std::string_view to_string(ObjectiveKind kind);
std::string_view to_string(InitMode mode);
std::string_view to_string(PromptTemplate tmpl);
std::string_view to_string(ConceptKind kind);
std::string_view to_string(VocabStructure structure);
InitMode parse_init_mode(std::string_view name);

}  // namespace subsearch
