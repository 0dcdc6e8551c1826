// SPDX-License-Identifier: Apache-2.0
//
// Black-box fitness contract plus the in-process objectives: a desk-scale
// surrogate of the denoising reconstruction loss, standard benchmark functions,
// and the toy feature encoders used by conditioned initialization.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "subsearch/numerics.hpp"

namespace subsearch {

// ---------------------------------------------------------------------------
// Vocabulary

enum class VocabStructure { kRandomGaussian, kClustered };

struct VocabularyOptions {
  VocabStructure structure = VocabStructure::kRandomGaussian;
  /// Per-entry std of the random-gaussian table, and of the cluster centers.
  double entry_std = 0.02;
  std::size_t clusters = 4;
  /// Within-cluster std as a fraction of entry_std.
  double cluster_spread = 0.2;
};

/// V x D token embedding table. Row v is the embedding of token v.
class VocabularyTable {
 public:
  VocabularyTable(std::vector<std::string> tokens, Matrix embeddings);

  std::size_t size() const noexcept { return static_cast<std::size_t>(embeddings_.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(embeddings_.cols()); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const Matrix& embeddings() const noexcept { return embeddings_; }
  Vector row(std::size_t v) const { return embeddings_.row(static_cast<Eigen::Index>(v)).transpose(); }
  const Vector& mean() const noexcept { return mean_; }
  /// Std over all entries after subtracting the column means, normalized by D*(V-1).
  double sigma_e() const noexcept { return sigma_e_; }

 private:
  std::vector<std::string> tokens_;
  Matrix embeddings_;
  Vector mean_;
  double sigma_e_ = 0.0;
};

VocabularyTable build_vocabulary(std::uint64_t seed, std::size_t vocab_size, std::size_t dim,
                                 const VocabularyOptions& options = {});

// ---------------------------------------------------------------------------
// Surrogate scene

enum class ConceptKind { kRandom, kTokenMixture };

struct SceneOptions {
  std::size_t images = 5;
  double eta = 0.01;
  ConceptKind concept_kind = ConceptKind::kTokenMixture;
  std::size_t mixture_size = 3;
  /// Rendered image length; 0 means equal to the embedding dim.
  std::size_t image_dim = 0;
};

/// A hidden concept e_star rendered by a fixed linear decoder M (orthonormal columns)
/// into N noisy observations Y_i = M e_star + eta_i.
struct SurrogateScene {
  Vector e_star;
  Matrix decoder;
  std::vector<Vector> images;
  double eta = 0.0;
  /// Populated for token-mixture concepts.
  std::vector<std::size_t> mixture_tokens;
  Vector mixture_weights;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(decoder.cols()); }
  std::size_t image_dim() const noexcept { return static_cast<std::size_t>(decoder.rows()); }
};

SurrogateScene generate_scene(std::uint64_t seed, const VocabularyTable& vocab,
                              const SceneOptions& options = {});

/// Fixes the diffusion timestep and the noise samples of one fitness evaluation.
struct NoiseKey {
  std::uint64_t t_seed = 0;
  std::uint64_t eps_seed = 0;
  friend bool operator==(const NoiseKey&, const NoiseKey&) = default;
};

/// Linear schedule alpha_bar(t) = 1 - t.
double alpha_bar(double t);
/// Timestep drawn uniformly on [0.1, 0.9] from the key's t stream.
double timestep_for(const NoiseKey& key);

/// Reconstruction loss averaged over `batch` (image, noise) pairs under the key's
/// timestep. Pair k uses image k mod N; batch 0 means one pair per image.
/// Evaluated in closed form: alpha/(1-alpha) * weighted mean of |Y_i - M e|^2.
double surrogate_loss(const Vector& e, const SurrogateScene& scene, const NoiseKey& key,
                      std::size_t batch = 0);

/// Same loss computed through the explicit diffusion / denoiser path:
/// z = sqrt(a) Y + sqrt(1-a) eps, eps_hat = (z - sqrt(a) M e) / sqrt(1-a), |eps_hat - eps|^2.
double surrogate_loss_explicit(const Vector& e, const SurrogateScene& scene, const NoiseKey& key,
                               std::size_t batch = 0);

// ---------------------------------------------------------------------------
// Objective contract

class Objective {
 public:
  virtual ~Objective() = default;

  /// Length of the embedding accepted by evaluate.
  virtual std::size_t dim() const = 0;
  virtual double evaluate(const Vector& e, const NoiseKey& key) const = 0;
  /// Element i equals evaluate(es[i], key) exactly.
  virtual std::vector<double> batch_evaluate(std::span<const Vector> es, const NoiseKey& key) const;
  /// Whether evaluate may run concurrently on several threads.
  virtual bool concurrent_evaluation() const { return true; }
  /// Embedding that minimizes the loss, when the objective knows it.
  virtual std::optional<Vector> known_optimum() const { return std::nullopt; }
};

/// Surrogate loss over a k-token pseudo-word: the k concatenated token embeddings are
/// pooled by their mean before rendering.
class SurrogateObjective final : public Objective {
 public:
  SurrogateObjective(SurrogateScene scene, std::size_t batch, std::size_t tokens = 1);

  std::size_t dim() const override { return scene_.dim() * tokens_; }
  double evaluate(const Vector& e, const NoiseKey& key) const override;
  std::optional<Vector> known_optimum() const override;

  const SurrogateScene& scene() const noexcept { return scene_; }
  std::size_t tokens() const noexcept { return tokens_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  SurrogateScene scene_;
  std::size_t batch_;
  std::size_t tokens_;
};

/// Mean of the `token_dim`-long blocks of a concatenated multi-token embedding.
Vector pool_tokens(const Vector& e, std::size_t token_dim);

enum class BenchmarkKind { kSphere, kRosenbrock, kRastrigin };

BenchmarkKind parse_benchmark_kind(std::string_view name);
std::string_view to_string(BenchmarkKind kind);

/// Standard test function applied to the first d* coordinates of a fixed random
/// orthonormal rotation of the ambient space. Ignores the noise key.
class BenchmarkObjective final : public Objective {
 public:
  BenchmarkObjective(BenchmarkKind kind, std::size_t intrinsic_dim, std::size_t ambient_dim,
                     std::uint64_t seed);

  std::size_t dim() const override { return static_cast<std::size_t>(basis_.rows()); }
  double evaluate(const Vector& e, const NoiseKey& key) const override;
  std::optional<Vector> known_optimum() const override { return optimum_; }

  BenchmarkKind kind() const noexcept { return kind_; }
  std::size_t intrinsic_dim() const noexcept { return static_cast<std::size_t>(basis_.cols()); }
  /// D x d* matrix with orthonormal columns; z = basis^T e.
  const Matrix& basis() const noexcept { return basis_; }
  /// The test function on rotated coordinates z (length d*).
  double evaluate_intrinsic(const Vector& z) const;

 private:
  BenchmarkKind kind_;
  Matrix basis_;
  Vector optimum_;
};

std::unique_ptr<BenchmarkObjective> benchmark_objective(std::string_view name,
                                                        std::size_t intrinsic_dim,
                                                        std::size_t ambient_dim,
                                                        std::uint64_t seed);

/// Wraps a callable. Used for tests and the Python bindings.
class FunctionObjective final : public Objective {
 public:
  using Fn = std::function<double(const Vector&, const NoiseKey&)>;
  FunctionObjective(std::size_t dim, Fn fn, bool concurrent = false)
      : dim_(dim), fn_(std::move(fn)), concurrent_(concurrent) {}

  std::size_t dim() const override { return dim_; }
  double evaluate(const Vector& e, const NoiseKey& key) const override;
  bool concurrent_evaluation() const override { return concurrent_; }

 private:
  std::size_t dim_;
  Fn fn_;
  bool concurrent_;
};

// ---------------------------------------------------------------------------
// Toy encoders

enum class PromptTemplate { kPhotoOf, kStyleOf };

/// Shared linear map from embedding space to a small latent space. Image features go
/// through the decoder pseudo-inverse first, so an image rendered from token v's
/// embedding lands next to the prompt feature of v.
class ToyEncoder {
 public:
  ToyEncoder(std::uint64_t seed, std::size_t embedding_dim, std::size_t latent_dim = 32);

  std::size_t embedding_dim() const noexcept { return static_cast<std::size_t>(map_.cols()); }
  std::size_t latent_dim() const noexcept { return static_cast<std::size_t>(map_.rows()); }

  /// Unit feature of an image rendered by `decoder` (orthonormal columns).
  Vector encode_image(const Vector& image, const Matrix& decoder) const;
  /// Unit feature of the prompt "<template> <token>".
  Vector encode_prompt(const VocabularyTable& vocab, std::size_t token, PromptTemplate tmpl) const;
  /// Prompt features for every token, one per row.
  Matrix encode_all_prompts(const VocabularyTable& vocab, PromptTemplate tmpl) const;

 private:
  Vector prompt_feature(const Vector& embedding, PromptTemplate tmpl) const;

  Matrix map_;
  Vector photo_offset_;
  Vector style_offset_;
};

}  // namespace subsearch
