// SPDX-License-Identifier: Apache-2.0
#include "subsearch/subspace.hpp"

#include <cmath>
#include <cstring>

#include <fmt/format.h>

#include "subsearch/errors.hpp"

namespace subsearch {
namespace {

void check_dims(std::size_t ambient_dim, std::size_t d) {
  if (d == 0 || ambient_dim == 0) throw ConfigError("projection: dimensions must be positive", "projection.d");
  if (d > ambient_dim) {
    throw ConfigError(fmt::format("projection: subspace dim {} exceeds ambient dim {}", d, ambient_dim),
                      "projection.d");
  }
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev, std::uint64_t seed) {
  RngStream rng(seed, 0);
  Matrix w(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = stddev * rng.normal();
  }
  return w;
}

// FNV-1a over the raw bytes of the table; identifies the vocabulary a PCA basis came from.
std::uint64_t table_hash(const Matrix& m) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      unsigned char bytes[sizeof(double)];
      const double x = m(i, j);
      std::memcpy(bytes, &x, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
      }
    }
  }
  return h;
}

}  // namespace

std::string_view to_string(ProjectionKind kind) {
  switch (kind) {
    case ProjectionKind::kPca: return "pca";
    case ProjectionKind::kPriorNorm: return "prior-norm";
    case ProjectionKind::kRandomN01: return "random-n01";
    case ProjectionKind::kRandomN01OverD: return "random-n01-over-d";
    case ProjectionKind::kIdentity: return "identity";
  }
  return "unknown";
}

ProjectionKind parse_projection_kind(std::string_view name) {
  if (name == "pca") return ProjectionKind::kPca;
  if (name == "prior-norm" || name == "prior") return ProjectionKind::kPriorNorm;
  if (name == "random-n01" || name == "n01") return ProjectionKind::kRandomN01;
  if (name == "random-n01-over-d" || name == "n01d") return ProjectionKind::kRandomN01OverD;
  if (name == "identity") return ProjectionKind::kIdentity;
  throw ConfigError(fmt::format("unknown projection kind '{}'", name), "projection.kind");
}

double sigma_p(const PriorNormSpec& spec) {
  if (!(spec.lambda > 0.0) || !(spec.sigma_e > 0.0) || !(spec.sigma_q > 0.0) || spec.d == 0) {
    throw DomainError("sigma_p: lambda, sigma_e, sigma_q and d must all be positive");
  }
  const double value = spec.lambda * spec.sigma_e / (std::sqrt(static_cast<double>(spec.d)) * spec.sigma_q);
  if (!std::isfinite(value)) throw DomainError("sigma_p: result is not finite");
  return value;
}

Projection build_prior_norm_projection(const PriorNormSpec& spec, std::size_t ambient_dim, std::uint64_t seed) {
  const double stddev = sigma_p(spec);
  check_dims(ambient_dim, spec.d);
  return {gaussian_matrix(ambient_dim, spec.d, stddev, seed), ProjectionKind::kPriorNorm,
          fmt::format("prior-norm seed={} sigma_p={:.17g} lambda={:.17g} sigma_e={:.17g} sigma_q={:.17g}", seed,
                      stddev, spec.lambda, spec.sigma_e, spec.sigma_q)};
}

Projection build_pca_projection(const VocabularyTable& vocab, std::size_t d) {
  const std::size_t max_d = std::min(vocab.size() - 1, vocab.dim());
  if (d == 0 || d > max_d) {
    throw ConfigError(fmt::format("pca: d = {} must lie in [1, min(V-1, D)] = [1, {}]", d, max_d), "projection.d");
  }
  const Matrix centered = vocab.embeddings().rowwise() - vocab.mean().transpose();
  Matrix covariance = centered.transpose() * centered / static_cast<double>(vocab.size() - 1);
  covariance = 0.5 * (covariance + covariance.transpose()).eval();
  const SymEigResult eig = eig_sym(covariance);
  const double top = eig.eigenvalues(0);
  const double last = eig.eigenvalues(static_cast<Eigen::Index>(d) - 1);
  if (!(top > 0.0) || !(last > 1e-12 * top)) {
    throw ConfigError(fmt::format("pca: d = {} exceeds the numerical rank of the vocabulary", d), "projection.d");
  }
  return {eig.eigenvectors.leftCols(static_cast<Eigen::Index>(d)), ProjectionKind::kPca,
          fmt::format("pca vocab-hash={:016x} V={} D={}", table_hash(vocab.embeddings()), vocab.size(), vocab.dim())};
}

Projection build_random_projection(std::size_t ambient_dim, std::size_t d, ProjectionKind variant,
                                   std::uint64_t seed) {
  check_dims(ambient_dim, d);
  double stddev = 1.0;
  switch (variant) {
    case ProjectionKind::kRandomN01: break;
    case ProjectionKind::kRandomN01OverD: stddev = 1.0 / std::sqrt(static_cast<double>(d)); break;
    default: throw DomainError("build_random_projection: variant must be random-n01 or random-n01-over-d");
  }
  return {gaussian_matrix(ambient_dim, d, stddev, seed), variant,
          fmt::format("{} seed={}", to_string(variant), seed)};
}

Projection identity_projection(std::size_t ambient_dim) {
  check_dims(ambient_dim, ambient_dim);
  const auto n = static_cast<Eigen::Index>(ambient_dim);
  return {Matrix::Identity(n, n), ProjectionKind::kIdentity, "identity"};
}

Vector compose(const Vector& e0, const Projection& projection, const Vector& q) {
  const auto big_d = projection.weights.rows();
  const auto small_d = projection.weights.cols();
  if (big_d == 0 || small_d == 0 || e0.size() == 0 || e0.size() % big_d != 0 || q.size() % small_d != 0 ||
      e0.size() / big_d != q.size() / small_d) {
    throw DomainError(fmt::format("compose: e0 length {} and Q length {} do not match a {}x{} projection",
                                  e0.size(), q.size(), big_d, small_d));
  }
  Vector e = e0;
  const auto tokens = e0.size() / big_d;
  for (Eigen::Index k = 0; k < tokens; ++k) {
    e.segment(k * big_d, big_d).noalias() += projection.weights * q.segment(k * small_d, small_d);
  }
  return e;
}

}  // namespace subsearch
