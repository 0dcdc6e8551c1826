// SPDX-License-Identifier: Apache-2.0
//
// Projection matrices W_p (D x d) and embedding composition e = e0 + W_p Q.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "subsearch/numerics.hpp"
#include "subsearch/objectives.hpp"

namespace subsearch {

enum class ProjectionKind {
  kPca,
  kPriorNorm,
  kRandomN01,
  kRandomN01OverD,
  /// Direct search in the ambient space (W_p = I).
  kIdentity,
};

std::string_view to_string(ProjectionKind kind);
/// Accepts the canonical names and the CLI short forms (pca, prior, n01, n01d, identity).
ProjectionKind parse_projection_kind(std::string_view name);

struct Projection {
  Matrix weights;  // D x d
  ProjectionKind kind = ProjectionKind::kIdentity;
  std::string provenance;

  std::size_t ambient_dim() const noexcept { return static_cast<std::size_t>(weights.rows()); }
  std::size_t subspace_dim() const noexcept { return static_cast<std::size_t>(weights.cols()); }
};

struct PriorNormSpec {
  double lambda = 1.0;
  double sigma_e = 0.0;
  /// Std of the increment distribution; taken from the optimizer's initial step size.
  double sigma_q = 0.5;
  std::size_t d = 0;
};

/// lambda * sigma_e / (sqrt(d) * sigma_q).
double sigma_p(const PriorNormSpec& spec);

/// Entries i.i.d. N(0, sigma_p^2), so W_p Q with Q ~ N(0, sigma_q^2 I) has entry std lambda * sigma_e.
Projection build_prior_norm_projection(const PriorNormSpec& spec, std::size_t ambient_dim, std::uint64_t seed);

/// Top-d eigenvectors of the mean-centered vocabulary covariance (1/(V-1) normalization).
Projection build_pca_projection(const VocabularyTable& vocab, std::size_t d);

/// Entries i.i.d. N(0, 1) or N(0, 1/d).
Projection build_random_projection(std::size_t ambient_dim, std::size_t d, ProjectionKind variant,
                                   std::uint64_t seed);

Projection identity_projection(std::size_t ambient_dim);

/// e_k = e0_k + W_p Q_k for each token k. `e0` holds k concatenated D-blocks and `q`
/// k concatenated d-blocks.
Vector compose(const Vector& e0, const Projection& projection, const Vector& q);

}  // namespace subsearch
