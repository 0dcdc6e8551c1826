// SPDX-License-Identifier: Apache-2.0
#include "subsearch/objectives.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "subsearch/errors.hpp"

namespace subsearch {
namespace {

constexpr double kTimestepLow = 0.1;
constexpr double kTimestepHigh = 0.9;
constexpr double kTemplateOffset = 0.1;

Vector normalized(const Vector& v, const char* what) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw DomainError(fmt::format("{}: zero or non-finite feature", what));
  return v / n;
}

Vector random_unit(RngStream& rng, std::size_t n) {
  return normal_sample(rng, n).normalized();
}

// Number of (image, noise) pairs drawn from each image for a batch.
std::vector<double> pair_counts(std::size_t images, std::size_t batch) {
  const std::size_t pairs = batch == 0 ? images : batch;
  std::vector<double> counts(images, static_cast<double>(pairs / images));
  for (std::size_t k = 0; k < pairs % images; ++k) counts[k] += 1.0;
  return counts;
}

void check_scene_input(const Vector& e, const SurrogateScene& scene) {
  if (static_cast<std::size_t>(e.size()) != scene.dim()) {
    throw DomainError(fmt::format("surrogate_loss: embedding has length {}, scene expects {}",
                                  e.size(), scene.dim()));
  }
  if (scene.images.empty()) throw EmptyRequestError("surrogate_loss: scene has no images");
}

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary

VocabularyTable::VocabularyTable(std::vector<std::string> tokens, Matrix embeddings)
    : tokens_(std::move(tokens)), embeddings_(std::move(embeddings)) {
  if (embeddings_.rows() < 2 || embeddings_.cols() < 2) {
    throw DomainError("VocabularyTable: need at least 2 tokens and 2 dimensions");
  }
  if (tokens_.size() != static_cast<std::size_t>(embeddings_.rows())) {
    throw DomainError("VocabularyTable: token list and embedding rows differ in length");
  }
  if (!embeddings_.allFinite()) throw DomainError("VocabularyTable: non-finite embedding entry");
  mean_ = embeddings_.colwise().mean().transpose();
  const double sum_sq = (embeddings_.rowwise() - mean_.transpose()).squaredNorm();
  const double dof = static_cast<double>(embeddings_.cols()) * static_cast<double>(embeddings_.rows() - 1);
  sigma_e_ = std::sqrt(sum_sq / dof);
  if (!(sigma_e_ > 0.0)) throw DomainError("VocabularyTable: constant table (sigma_e = 0)");
}

VocabularyTable build_vocabulary(std::uint64_t seed, std::size_t vocab_size, std::size_t dim,
                                 const VocabularyOptions& options) {
  if (vocab_size < 2 || dim < 2) throw DomainError("build_vocabulary: need V >= 2 and D >= 2");
  if (!(options.entry_std > 0.0)) throw DomainError("build_vocabulary: entry_std must be positive");
  const auto v = static_cast<Eigen::Index>(vocab_size);
  const auto d = static_cast<Eigen::Index>(dim);
  Matrix table(v, d);
  RngStream entries(seed, 0);

  switch (options.structure) {
    case VocabStructure::kRandomGaussian:
      for (Eigen::Index i = 0; i < v; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) table(i, j) = options.entry_std * entries.normal();
      }
      break;
    case VocabStructure::kClustered: {
      if (options.clusters == 0) throw DomainError("build_vocabulary: clustered needs >= 1 cluster");
      RngStream centers_rng(seed, 1);
      RngStream assign_rng(seed, 2);
      const auto c = static_cast<Eigen::Index>(options.clusters);
      Matrix centers(c, d);
      for (Eigen::Index k = 0; k < c; ++k) {
        for (Eigen::Index j = 0; j < d; ++j) centers(k, j) = options.entry_std * centers_rng.normal();
      }
      const double spread = options.cluster_spread * options.entry_std;
      for (Eigen::Index i = 0; i < v; ++i) {
        const auto k = static_cast<Eigen::Index>(assign_rng.below(options.clusters));
        for (Eigen::Index j = 0; j < d; ++j) table(i, j) = centers(k, j) + spread * entries.normal();
      }
      break;
    }
  }

  std::vector<std::string> tokens;
  tokens.reserve(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) tokens.push_back(fmt::format("<tok{}>", i));
  return VocabularyTable(std::move(tokens), std::move(table));
}

// ---------------------------------------------------------------------------
// Scene

SurrogateScene generate_scene(std::uint64_t seed, const VocabularyTable& vocab,
                              const SceneOptions& options) {
  if (options.images == 0) throw EmptyRequestError("generate_scene: need at least one image");
  if (!(options.eta >= 0.0)) throw DomainError("generate_scene: eta must be >= 0");
  const std::size_t dim = vocab.dim();
  const std::size_t image_dim = options.image_dim == 0 ? dim : options.image_dim;
  if (image_dim < dim) {
    throw DomainError("generate_scene: image_dim must be >= embedding dim for an orthonormal decoder");
  }

  RngStream concept_rng(seed, 0);
  RngStream decoder_rng(seed, 1);
  RngStream noise_rng(seed, 2);

  SurrogateScene scene;
  scene.eta = options.eta;
  switch (options.concept_kind) {
    case ConceptKind::kRandom:
      // Drawn from the vocabulary's own first two moments.
      scene.e_star = vocab.mean() + vocab.sigma_e() * normal_sample(concept_rng, dim);
      break;
    case ConceptKind::kTokenMixture: {
      const std::size_t k = options.mixture_size;
      if (k == 0 || k > vocab.size()) throw DomainError("generate_scene: mixture_size out of range");
      std::vector<std::size_t> pool(vocab.size());
      std::iota(pool.begin(), pool.end(), std::size_t{0});
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(concept_rng.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
      }
      scene.mixture_tokens.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
      // Dirichlet(1, ..., 1) weights via normalized exponentials.
      scene.mixture_weights.resize(static_cast<Eigen::Index>(k));
      for (auto& w : scene.mixture_weights) w = -std::log(1.0 - concept_rng.uniform());
      scene.mixture_weights /= scene.mixture_weights.sum();
      scene.e_star = Vector::Zero(static_cast<Eigen::Index>(dim));
      for (std::size_t i = 0; i < k; ++i) {
        scene.e_star += scene.mixture_weights(static_cast<Eigen::Index>(i)) * vocab.row(scene.mixture_tokens[i]);
      }
      break;
    }
  }

  scene.decoder = random_orthonormal(decoder_rng, image_dim, dim);
  const Vector clean = scene.decoder * scene.e_star;
  scene.images.reserve(options.images);
  for (std::size_t i = 0; i < options.images; ++i) {
    if (options.eta == 0.0) {
      scene.images.push_back(clean);
    } else {
      scene.images.push_back(clean + options.eta * normal_sample(noise_rng, image_dim));
    }
  }
  return scene;
}

double alpha_bar(double t) {
  if (!(t > 0.0 && t < 1.0)) throw DomainError("alpha_bar: t must lie in (0, 1)");
  return 1.0 - t;
}

double timestep_for(const NoiseKey& key) {
  RngStream rng(key.t_seed, 0);
  return kTimestepLow + (kTimestepHigh - kTimestepLow) * rng.uniform();
}

double surrogate_loss(const Vector& e, const SurrogateScene& scene, const NoiseKey& key,
                      std::size_t batch) {
  check_scene_input(e, scene);
  const double a = alpha_bar(timestep_for(key));
  const Vector rendered = scene.decoder * e;
  const std::vector<double> counts = pair_counts(scene.images.size(), batch);
  double total = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scene.images.size(); ++i) {
    if (counts[i] == 0.0) continue;
    total += counts[i] * (scene.images[i] - rendered).squaredNorm();
    pairs += counts[i];
  }
  return a / (1.0 - a) * total / pairs;
}

double surrogate_loss_explicit(const Vector& e, const SurrogateScene& scene, const NoiseKey& key,
                               std::size_t batch) {
  check_scene_input(e, scene);
  const double a = alpha_bar(timestep_for(key));
  const double signal = std::sqrt(a);
  const double noise = std::sqrt(1.0 - a);
  const Vector rendered = scene.decoder * e;
  const std::size_t pairs = batch == 0 ? scene.images.size() : batch;
  double total = 0.0;
  for (std::size_t k = 0; k < pairs; ++k) {
    const Vector& y = scene.images[k % scene.images.size()];
    RngStream eps_rng(key.eps_seed, k);
    const Vector eps = normal_sample(eps_rng, scene.image_dim());
    const Vector z = signal * y + noise * eps;
    const Vector eps_hat = (z - signal * rendered) / noise;
    total += (eps_hat - eps).squaredNorm();
  }
  return total / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// Objectives

std::vector<double> Objective::batch_evaluate(std::span<const Vector> es, const NoiseKey& key) const {
  std::vector<double> out;
  out.reserve(es.size());
  for (const Vector& e : es) out.push_back(evaluate(e, key));
  return out;
}

Vector pool_tokens(const Vector& e, std::size_t token_dim) {
  const auto n = static_cast<std::size_t>(e.size());
  if (token_dim == 0 || n % token_dim != 0 || n == 0) {
    throw DomainError(fmt::format("pool_tokens: length {} is not a multiple of token dim {}", n, token_dim));
  }
  const std::size_t tokens = n / token_dim;
  const auto d = static_cast<Eigen::Index>(token_dim);
  Vector pooled = e.head(d);
  for (std::size_t k = 1; k < tokens; ++k) pooled += e.segment(static_cast<Eigen::Index>(k) * d, d);
  return pooled / static_cast<double>(tokens);
}

SurrogateObjective::SurrogateObjective(SurrogateScene scene, std::size_t batch, std::size_t tokens)
    : scene_(std::move(scene)), batch_(batch), tokens_(tokens) {
  if (tokens_ == 0) throw DomainError("SurrogateObjective: token count must be >= 1");
  if (scene_.images.empty()) throw EmptyRequestError("SurrogateObjective: scene has no images");
}

double SurrogateObjective::evaluate(const Vector& e, const NoiseKey& key) const {
  if (static_cast<std::size_t>(e.size()) != dim()) {
    throw DomainError(fmt::format("SurrogateObjective: embedding has length {}, expected {}", e.size(), dim()));
  }
  if (tokens_ == 1) return surrogate_loss(e, scene_, key, batch_);
  return surrogate_loss(pool_tokens(e, scene_.dim()), scene_, key, batch_);
}

std::optional<Vector> SurrogateObjective::known_optimum() const {
  return scene_.e_star.replicate(static_cast<Eigen::Index>(tokens_), 1).eval();
}

BenchmarkKind parse_benchmark_kind(std::string_view name) {
  if (name == "sphere") return BenchmarkKind::kSphere;
  if (name == "rosenbrock") return BenchmarkKind::kRosenbrock;
  if (name == "rastrigin") return BenchmarkKind::kRastrigin;
  throw ConfigError(fmt::format("unknown benchmark objective '{}'", name), "objective.benchmark.name");
}

std::string_view to_string(BenchmarkKind kind) {
  switch (kind) {
    case BenchmarkKind::kSphere: return "sphere";
    case BenchmarkKind::kRosenbrock: return "rosenbrock";
    case BenchmarkKind::kRastrigin: return "rastrigin";
  }
  return "unknown";
}

BenchmarkObjective::BenchmarkObjective(BenchmarkKind kind, std::size_t intrinsic_dim,
                                       std::size_t ambient_dim, std::uint64_t seed)
    : kind_(kind) {
  if (intrinsic_dim < 1 || intrinsic_dim > ambient_dim) {
    throw ConfigError("benchmark: need 1 <= intrinsic_dim <= ambient_dim", "objective.benchmark.intrinsic_dim");
  }
  if (kind == BenchmarkKind::kRosenbrock && intrinsic_dim < 2) {
    throw ConfigError("benchmark: rosenbrock needs intrinsic_dim >= 2", "objective.benchmark.intrinsic_dim");
  }
  RngStream rng(seed, 0);
  basis_ = random_orthonormal(rng, ambient_dim, intrinsic_dim);
  const auto k = static_cast<Eigen::Index>(intrinsic_dim);
  const Vector z_opt = kind == BenchmarkKind::kRosenbrock ? Vector::Ones(k) : Vector::Zero(k);
  optimum_ = basis_ * z_opt;
}

double BenchmarkObjective::evaluate_intrinsic(const Vector& z) const {
  switch (kind_) {
    case BenchmarkKind::kSphere:
      return z.squaredNorm();
    case BenchmarkKind::kRosenbrock: {
      double sum = 0.0;
      for (Eigen::Index i = 0; i + 1 < z.size(); ++i) {
        const double a = z(i + 1) - z(i) * z(i);
        const double b = 1.0 - z(i);
        sum += 100.0 * a * a + b * b;
      }
      return sum;
    }
    case BenchmarkKind::kRastrigin: {
      double sum = 10.0 * static_cast<double>(z.size());
      for (const double x : z) sum += x * x - 10.0 * std::cos(2.0 * std::numbers::pi * x);
      return sum;
    }
  }
  throw InternalError("BenchmarkObjective: unknown kind");
}

double BenchmarkObjective::evaluate(const Vector& e, const NoiseKey& /*key*/) const {
  if (e.size() != basis_.rows()) {
    throw DomainError(fmt::format("benchmark: embedding has length {}, expected {}", e.size(), basis_.rows()));
  }
  return evaluate_intrinsic(basis_.transpose() * e);
}

std::unique_ptr<BenchmarkObjective> benchmark_objective(std::string_view name, std::size_t intrinsic_dim,
                                                        std::size_t ambient_dim, std::uint64_t seed) {
  return std::make_unique<BenchmarkObjective>(parse_benchmark_kind(name), intrinsic_dim, ambient_dim, seed);
}

double FunctionObjective::evaluate(const Vector& e, const NoiseKey& key) const {
  if (static_cast<std::size_t>(e.size()) != dim_) {
    throw DomainError(fmt::format("FunctionObjective: embedding has length {}, expected {}", e.size(), dim_));
  }
  return fn_(e, key);
}

// ---------------------------------------------------------------------------
// Encoders

ToyEncoder::ToyEncoder(std::uint64_t seed, std::size_t embedding_dim, std::size_t latent_dim) {
  if (embedding_dim == 0 || latent_dim == 0) throw DomainError("ToyEncoder: dimensions must be positive");
  RngStream map_rng(seed, 0);
  RngStream offset_rng(seed, 1);
  const auto l = static_cast<Eigen::Index>(latent_dim);
  const auto d = static_cast<Eigen::Index>(embedding_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(embedding_dim));
  map_.resize(l, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < l; ++i) map_(i, j) = scale * map_rng.normal();
  }
  photo_offset_ = random_unit(offset_rng, latent_dim);
  style_offset_ = random_unit(offset_rng, latent_dim);
}

Vector ToyEncoder::prompt_feature(const Vector& embedding, PromptTemplate tmpl) const {
  const Vector base = normalized(map_ * embedding, "encode_prompt");
  const Vector& offset = tmpl == PromptTemplate::kPhotoOf ? photo_offset_ : style_offset_;
  return normalized(base + kTemplateOffset * offset, "encode_prompt");
}

Vector ToyEncoder::encode_image(const Vector& image, const Matrix& decoder) const {
  if (image.size() != decoder.rows() || decoder.cols() != map_.cols()) {
    throw DomainError(fmt::format("encode_image: image length {} / decoder {}x{} / encoder dim {} mismatch",
                                  image.size(), decoder.rows(), decoder.cols(), map_.cols()));
  }
  // Orthonormal columns: the pseudo-inverse is the transpose.
  return normalized(map_ * (decoder.transpose() * image), "encode_image");
}

Vector ToyEncoder::encode_prompt(const VocabularyTable& vocab, std::size_t token, PromptTemplate tmpl) const {
  if (vocab.dim() != embedding_dim()) throw DomainError("encode_prompt: vocabulary dim mismatch");
  if (token >= vocab.size()) throw DomainError(fmt::format("encode_prompt: token {} out of range", token));
  return prompt_feature(vocab.row(token), tmpl);
}

Matrix ToyEncoder::encode_all_prompts(const VocabularyTable& vocab, PromptTemplate tmpl) const {
  if (vocab.dim() != embedding_dim()) throw DomainError("encode_all_prompts: vocabulary dim mismatch");
  Matrix features(static_cast<Eigen::Index>(vocab.size()), map_.rows());
  for (std::size_t v = 0; v < vocab.size(); ++v) {
    features.row(static_cast<Eigen::Index>(v)) = prompt_feature(vocab.row(v), tmpl).transpose();
  }
  return features;
}

}  // namespace subsearch
