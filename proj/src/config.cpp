// SPDX-License-Identifier: Apache-2.0
#include "subsearch/config.hpp"

#include <cmath>
#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "subsearch/errors.hpp"

namespace subsearch {
namespace {

using Json = nlohmann::json;

// Reads keys out of one JSON object, remembering which were consumed so leftovers
// can be reported as unknown.
class Section {
 public:
  Section(const Json& j, std::string path) : json_(j), path_(std::move(path)) {
    if (!json_.is_object()) throw ConfigError(fmt::format("'{}' must be a JSON object", display()), path_);
  }

  template <typename T>
  void read(const char* key, T& out) {
    if (!take(key)) return;
    try {
      out = json_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(fmt::format("field '{}' has the wrong type", field(key)), field(key));
    }
  }

  void read_count(const char* key, std::size_t& out) {
    if (!take(key)) return;
    const Json& v = json_.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
      throw ConfigError(fmt::format("field '{}' must be a non-negative integer", field(key)), field(key));
    }
    out = v.get<std::size_t>();
  }

  template <typename Parse>
  void read_enum(const char* key, Parse parse) {
    if (!take(key)) return;
    const Json& v = json_.at(key);
    if (!v.is_string()) throw ConfigError(fmt::format("field '{}' must be a string", field(key)), field(key));
    try {
      parse(v.get<std::string>());
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("field '{}': {}", field(key), e.what()), field(key));
    }
  }

  std::optional<Section> child(const char* key) {
    if (!take(key)) return std::nullopt;
    return Section(json_.at(key), field(key));
  }

  void finish() const {
    for (const auto& [key, value] : json_.items()) {
      if (!seen_.contains(key)) throw ConfigError(fmt::format("unknown config key '{}'", field(key.c_str())), field(key.c_str()));
    }
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  bool take(const char* key) {
    seen_.insert(key);
    return json_.contains(key) && !json_.at(key).is_null();
  }
  std::string display() const { return path_.empty() ? "<root>" : path_; }

  const Json& json_;
  std::string path_;
  std::set<std::string> seen_;
};

ObjectiveKind parse_objective_kind(std::string_view name) {
  if (name == "surrogate") return ObjectiveKind::kSurrogate;
  if (name == "benchmark") return ObjectiveKind::kBenchmark;
  if (name == "external") return ObjectiveKind::kExternal;
  throw ConfigError(fmt::format("unknown objective kind '{}'", name));
}

ConceptKind parse_concept(std::string_view name) {
  if (name == "random") return ConceptKind::kRandom;
  if (name == "token-mixture") return ConceptKind::kTokenMixture;
  throw ConfigError(fmt::format("unknown concept '{}'", name));
}

VocabStructure parse_structure(std::string_view name) {
  if (name == "random-gaussian") return VocabStructure::kRandomGaussian;
  if (name == "clustered") return VocabStructure::kClustered;
  throw ConfigError(fmt::format("unknown vocabulary structure '{}'", name));
}

PromptTemplate parse_template(std::string_view name) {
  if (name == "photo-of") return PromptTemplate::kPhotoOf;
  if (name == "style-of") return PromptTemplate::kStyleOf;
  throw ConfigError(fmt::format("unknown prompt template '{}'", name));
}

std::size_t line_of(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

void parse_into(const Json& root, RunConfig& c) {
  Section top(root, "");

  if (auto s = top.child("objective")) {
    s->read_enum("kind", [&](const std::string& v) { c.objective = parse_objective_kind(v); });
    if (auto sur = s->child("surrogate")) {
      sur->read_count("images", c.surrogate.images);
      sur->read("eta", c.surrogate.eta);
      sur->read_enum("concept", [&](const std::string& v) { c.surrogate.concept_kind = parse_concept(v); });
      sur->read_count("mixture_size", c.surrogate.mixture_size);
      sur->read_count("image_dim", c.surrogate.image_dim);
      sur->read_count("batch", c.surrogate.batch);
      sur->finish();
    }
    if (auto b = s->child("benchmark")) {
      b->read_enum("name", [&](const std::string& v) { c.benchmark.kind = parse_benchmark_kind(v); });
      b->read_count("intrinsic_dim", c.benchmark.intrinsic_dim);
      b->read_count("ambient_dim", c.benchmark.ambient_dim);
      b->read("start_scale", c.benchmark.start_scale);
      b->finish();
    }
    if (auto e = s->child("external")) {
      e->read("command", c.external.command);
      e->read_count("dim", c.external.dim);
      e->read("timeout_ms", c.external.timeout_ms);
      e->finish();
    }
    s->finish();
  }

  if (auto s = top.child("vocab")) {
    s->read_count("size", c.vocab.size);
    s->read_count("dim", c.vocab.dim);
    s->read_enum("structure", [&](const std::string& v) { c.vocab.options.structure = parse_structure(v); });
    s->read("entry_std", c.vocab.options.entry_std);
    s->read_count("clusters", c.vocab.options.clusters);
    s->read("cluster_spread", c.vocab.options.cluster_spread);
    s->finish();
  }

  if (auto s = top.child("init")) {
    s->read_enum("mode", [&](const std::string& v) { c.init.mode = parse_init_mode(v); });
    s->read_enum("template", [&](const std::string& v) { c.init.prompt_template = parse_template(v); });
    s->read("temperature", c.init.temperature);
    s->read_count("encoder_dim", c.init.encoder_dim);
    s->read("vector", c.init.vector);
    s->finish();
  }

  if (auto s = top.child("projection")) {
    s->read_enum("kind", [&](const std::string& v) { c.projection.kind = parse_projection_kind(v); });
    s->read_count("d", c.projection.d);
    s->read("lambda", c.projection.lambda);
    double sigma_e = 0.0;
    bool has_sigma_e = false;
    if (root.at("projection").contains("sigma_e") && !root.at("projection").at("sigma_e").is_null()) has_sigma_e = true;
    s->read("sigma_e", sigma_e);
    if (has_sigma_e) c.projection.sigma_e = sigma_e;
    s->finish();
  }

  top.read_count("tokens", c.tokens);

  if (auto s = top.child("cma")) {
    s->read_count("popsize", c.cma.popsize);
    s->read("sigma0", c.cma.sigma0);
    s->read("budget", c.cma.budget);
    s->finish();
  }

  top.read_enum("noise_policy", [&](const std::string& v) { c.noise_policy = parse_noise_policy(v); });
  {
    double target = 0.0;
    const bool has_target = root.contains("target") && !root.at("target").is_null();
    top.read("target", target);
    if (has_target) c.target = target;
  }
  top.read("seed", c.seed);
  top.read("d_sweep", c.d_sweep);
  top.read("out_dir", c.out_dir);
  top.read("trace_wall_time", c.trace_wall_time);
  top.finish();
}

}  // namespace

std::string_view to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::kSurrogate: return "surrogate";
    case ObjectiveKind::kBenchmark: return "benchmark";
    case ObjectiveKind::kExternal: return "external";
  }
  return "unknown";
}

std::string_view to_string(InitMode mode) {
  switch (mode) {
    case InitMode::kConditioned: return "conditioned";
    case InitMode::kRandomToken: return "random-token";
    case InitMode::kGivenVector: return "given-vector";
  }
  return "unknown";
}

std::string_view to_string(PromptTemplate tmpl) {
  return tmpl == PromptTemplate::kPhotoOf ? "photo-of" : "style-of";
}

std::string_view to_string(ConceptKind kind) { return kind == ConceptKind::kRandom ? "random" : "token-mixture"; }

std::string_view to_string(VocabStructure structure) {
  return structure == VocabStructure::kRandomGaussian ? "random-gaussian" : "clustered";
}

InitMode parse_init_mode(std::string_view name) {
  if (name == "conditioned" || name == "cond") return InitMode::kConditioned;
  if (name == "random-token" || name == "random") return InitMode::kRandomToken;
  if (name == "given-vector") return InitMode::kGivenVector;
  throw ConfigError(fmt::format("unknown init mode '{}'", name), "init.mode");
}

std::vector<std::string> validate(const RunConfig& c) {
  std::vector<std::string> warnings;
  auto fail = [](const std::string& message, const char* field) { throw ConfigError(message, field); };

  if (c.tokens < 1 || c.tokens > 3) fail(fmt::format("tokens = {} must be 1, 2 or 3", c.tokens), "tokens");
  if (c.cma.popsize < 4) fail(fmt::format("cma.popsize = {} must be >= 4", c.cma.popsize), "cma.popsize");
  if (!(c.cma.sigma0 > 0.0)) fail("cma.sigma0 must be positive", "cma.sigma0");
  if (c.cma.budget < c.cma.popsize) fail("cma.budget must be at least cma.popsize", "cma.budget");
  if (!(c.init.temperature > 0.0)) fail("init.temperature must be positive", "init.temperature");
  if (c.init.encoder_dim == 0) fail("init.encoder_dim must be positive", "init.encoder_dim");
  if (!(c.projection.lambda > 0.0)) fail("projection.lambda must be positive", "projection.lambda");
  if (c.projection.sigma_e && !(*c.projection.sigma_e > 0.0)) fail("projection.sigma_e must be positive", "projection.sigma_e");
  if (c.vocab.size < 2) fail("vocab.size must be >= 2", "vocab.size");
  if (c.vocab.dim < 2) fail("vocab.dim must be >= 2", "vocab.dim");
  if (!(c.vocab.options.entry_std > 0.0)) fail("vocab.entry_std must be positive", "vocab.entry_std");
  if (c.d_sweep.empty()) fail("d_sweep must not be empty", "d_sweep");

  std::size_t ambient = c.vocab.dim;
  switch (c.objective) {
    case ObjectiveKind::kSurrogate:
      if (c.surrogate.images == 0) fail("objective.surrogate.images must be >= 1", "objective.surrogate.images");
      if (!(c.surrogate.eta >= 0.0)) fail("objective.surrogate.eta must be >= 0", "objective.surrogate.eta");
      if (c.surrogate.image_dim != 0 && c.surrogate.image_dim < c.vocab.dim) {
        fail("objective.surrogate.image_dim must be 0 or >= vocab.dim", "objective.surrogate.image_dim");
      }
      break;
    case ObjectiveKind::kBenchmark:
      ambient = c.benchmark.ambient_dim;
      if (c.benchmark.intrinsic_dim < 1 || c.benchmark.intrinsic_dim > c.benchmark.ambient_dim) {
        fail("objective.benchmark.intrinsic_dim must lie in [1, ambient_dim]", "objective.benchmark.intrinsic_dim");
      }
      if (c.tokens != 1) fail("benchmark objectives take a single token", "tokens");
      if (c.init.mode == InitMode::kConditioned || c.init.mode == InitMode::kRandomToken) {
        // Benchmarks start from a drawn point unless a vector is given.
      }
      if (c.projection.kind == ProjectionKind::kPca) fail("pca projection needs a vocabulary (surrogate or external)", "projection.kind");
      if (c.projection.kind == ProjectionKind::kPriorNorm && !c.projection.sigma_e) {
        fail("prior-norm projection on a benchmark needs projection.sigma_e", "projection.sigma_e");
      }
      break;
    case ObjectiveKind::kExternal:
      if (c.external.command.empty()) fail("objective.external.command is required", "objective.external.command");
      if (c.external.dim != 0) ambient = c.external.dim;
      if (c.init.mode == InitMode::kConditioned) {
        fail("conditioned init needs scene images; use random-token or given-vector with an external objective",
             "init.mode");
      }
      if (c.external.timeout_ms <= 0) fail("objective.external.timeout_ms must be positive", "objective.external.timeout_ms");
      break;
  }
  if (c.objective == ObjectiveKind::kExternal && c.external.dim != 0 && c.external.dim != c.vocab.dim &&
      c.init.mode == InitMode::kRandomToken) {
    fail("objective.external.dim must equal vocab.dim for random-token init", "objective.external.dim");
  }
  if (c.init.mode == InitMode::kGivenVector && c.init.vector.size() != ambient) {
    fail(fmt::format("init.vector has length {}, expected {}", c.init.vector.size(), ambient), "init.vector");
  }
  for (double x : c.init.vector) {
    if (!std::isfinite(x)) fail("init.vector has a non-finite entry", "init.vector");
  }

  if (c.projection.kind != ProjectionKind::kIdentity) {
    if (c.projection.d == 0 || c.projection.d > ambient) {
      fail(fmt::format("projection.d = {} must lie in [1, {}]", c.projection.d, ambient), "projection.d");
    }
    if (std::find(c.d_sweep.begin(), c.d_sweep.end(), c.projection.d) == c.d_sweep.end()) {
      warnings.push_back(fmt::format("projection.d = {} is outside the sweep set; using it as an explicit override",
                                     c.projection.d));
    }
  }
  return warnings;
}

LoadedConfig parse_config(std::string_view text, std::string_view source) {
  LoadedConfig loaded;
  const bool blank = std::all_of(text.begin(), text.end(), [](char ch) { return std::isspace(static_cast<unsigned char>(ch)); });
  if (!blank) {
    Json root;
    try {
      root = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(fmt::format("{}:{}: JSON parse error: {}", source, line_of(text, e.byte > 0 ? e.byte - 1 : 0),
                                    e.what()));
    }
    parse_into(root, loaded.config);
  }
  loaded.warnings = validate(loaded.config);
  return loaded;
}

LoadedConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot read config '{}'", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), path.string());
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["objective"]["kind"] = to_string(c.objective);
  j["objective"]["surrogate"] = {{"images", c.surrogate.images},
                                 {"eta", c.surrogate.eta},
                                 {"concept", to_string(c.surrogate.concept_kind)},
                                 {"mixture_size", c.surrogate.mixture_size},
                                 {"image_dim", c.surrogate.image_dim},
                                 {"batch", c.surrogate.batch}};
  j["objective"]["benchmark"] = {{"name", to_string(c.benchmark.kind)},
                                 {"intrinsic_dim", c.benchmark.intrinsic_dim},
                                 {"ambient_dim", c.benchmark.ambient_dim},
                                 {"start_scale", c.benchmark.start_scale}};
  j["objective"]["external"] = {
      {"command", c.external.command}, {"dim", c.external.dim}, {"timeout_ms", c.external.timeout_ms}};
  j["vocab"] = {{"size", c.vocab.size},
                {"dim", c.vocab.dim},
                {"structure", to_string(c.vocab.options.structure)},
                {"entry_std", c.vocab.options.entry_std},
                {"clusters", c.vocab.options.clusters},
                {"cluster_spread", c.vocab.options.cluster_spread}};
  j["init"] = {{"mode", to_string(c.init.mode)},
               {"template", to_string(c.init.prompt_template)},
               {"temperature", c.init.temperature},
               {"encoder_dim", c.init.encoder_dim},
               {"vector", c.init.vector}};
  j["projection"] = {{"kind", to_string(c.projection.kind)}, {"d", c.projection.d}, {"lambda", c.projection.lambda}};
  j["projection"]["sigma_e"] = c.projection.sigma_e ? nlohmann::ordered_json(*c.projection.sigma_e) : nullptr;
  j["tokens"] = c.tokens;
  j["cma"] = {{"popsize", c.cma.popsize}, {"sigma0", c.cma.sigma0}, {"budget", c.cma.budget}};
  j["noise_policy"] = to_string(c.noise_policy);
  j["target"] = c.target ? nlohmann::ordered_json(*c.target) : nullptr;
  j["seed"] = c.seed;
  j["d_sweep"] = c.d_sweep;
  j["out_dir"] = c.out_dir;
  j["trace_wall_time"] = c.trace_wall_time;
  return j;
}

std::string config_hash(const RunConfig& config) {
  nlohmann::ordered_json j = to_json(config);
  j.erase("out_dir");  // where results land does not change them
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return fmt::format("{:016x}", h);
}

std::optional<double> default_target(const RunConfig& config) {
  if (config.target) return config.target;
  if (config.objective != ObjectiveKind::kBenchmark) return std::nullopt;
  switch (config.benchmark.kind) {
    case BenchmarkKind::kSphere: return 1e-10;
    case BenchmarkKind::kRosenbrock: return 1e-6;
    case BenchmarkKind::kRastrigin: return 1e-6;
  }
  return std::nullopt;
}

}  // namespace subsearch
