// SPDX-License-Identifier: Apache-2.0
#include "subsearch/initialization.hpp"

#include "subsearch/errors.hpp"

namespace subsearch {

Vector conditioned_init_from_scores(const Matrix& scores, const Matrix& embeddings, double temperature) {
  if (scores.rows() == 0) throw EmptyRequestError("conditioned_init: empty image set");
  if (scores.cols() != embeddings.rows()) {
    throw DomainError("conditioned_init: score columns must match vocabulary rows");
  }
  Vector e0 = Vector::Zero(embeddings.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const Vector weights = softmax(scores.row(i).transpose(), temperature);
    e0.noalias() += embeddings.transpose() * weights;
  }
  return e0 / static_cast<double>(scores.rows());
}

Vector conditioned_init(const SurrogateScene& scene, const VocabularyTable& vocab, const InitConfig& config,
                        const ToyEncoder& encoder) {
  if (config.mode != InitMode::kConditioned) throw DomainError("conditioned_init: config mode is not conditioned");
  if (scene.images.empty()) throw EmptyRequestError("conditioned_init: empty image set");
  const Matrix prompts = encoder.encode_all_prompts(vocab, config.prompt_template);
  Matrix scores(static_cast<Eigen::Index>(scene.images.size()), prompts.rows());
  for (std::size_t i = 0; i < scene.images.size(); ++i) {
    const Vector image_feature = encoder.encode_image(scene.images[i], scene.decoder);
    // Both sides are unit vectors, so the dot product is the cosine similarity.
    scores.row(static_cast<Eigen::Index>(i)) = (prompts * image_feature).transpose();
  }
  return conditioned_init_from_scores(scores, vocab.embeddings(), config.temperature);
}

Vector random_token_init(const Matrix& embeddings, std::uint64_t seed) {
  if (embeddings.rows() == 0) throw EmptyRequestError("random_token_init: empty vocabulary");
  RngStream rng(seed, 0);
  const auto row = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(embeddings.rows())));
  return embeddings.row(row).transpose();
}

}  // namespace subsearch
