// SPDX-License-Identifier: Apache-2.0
//
// Starting embedding e0 for the pseudo-token: similarity-weighted average of the
// vocabulary (conditioned), or a uniformly chosen vocabulary row (random-token).
#pragma once

#include <cstdint>

#include "subsearch/numerics.hpp"
#include "subsearch/objectives.hpp"

namespace subsearch {

enum class InitMode { kConditioned, kRandomToken, kGivenVector };

struct InitConfig {
  PromptTemplate prompt_template = PromptTemplate::kPhotoOf;
  double temperature = 1.0;
  InitMode mode = InitMode::kConditioned;
};

/// e0 = (1/N) sum_i sum_v softmax_v(s(c(Y_i), c(X_v)) / T) e_v.
Vector conditioned_init(const SurrogateScene& scene, const VocabularyTable& vocab,
                        const InitConfig& config, const ToyEncoder& encoder);

/// The averaging step alone: `scores` holds one row of vocabulary similarities per image.
Vector conditioned_init_from_scores(const Matrix& scores, const Matrix& embeddings, double temperature);

/// A uniformly chosen row of `embeddings`.
Vector random_token_init(const Matrix& embeddings, std::uint64_t seed);
inline Vector random_token_init(const VocabularyTable& vocab, std::uint64_t seed) {
  return random_token_init(vocab.embeddings(), seed);
}

}  // namespace subsearch
