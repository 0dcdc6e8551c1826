// SPDX-License-Identifier: Apache-2.0
//
// Deterministic numeric primitives shared by every other module: a counter-based
// random stream, softmax, cosine similarity and a symmetric eigensolver.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

#include <Eigen/Dense>

namespace subsearch {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Philox4x32-10 counter-based generator. A stream is fully determined by its
/// (seed, stream id) pair; streams with distinct ids share no state, so any
/// component can own one without coordinating with the others.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer on [0, bound). `bound` must be positive.
  std::uint64_t below(std::uint64_t bound);
  double normal();

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> block_{};
  int block_pos_ = 2;
  std::optional<double> spare_normal_;
};

/// Mixes a master seed with a label into an independent child seed (splitmix64 finalizer
/// over the label bytes). Used to give each pipeline component its own stream.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);

/// n i.i.d. standard normal draws. Throws EmptyRequestError for n == 0.
Vector normal_sample(RngStream& rng, std::size_t n);

/// Numerically stable softmax of scores / temperature.
Vector softmax(const Vector& scores, double temperature = 1.0);

double cosine_similarity(const Vector& a, const Vector& b);

struct SymEigResult {
  Vector eigenvalues;   // descending
  Matrix eigenvectors;  // columns, orthonormal
};

/// Full eigendecomposition of a symmetric matrix. Eigenvalues are sorted descending
/// and each eigenvector is flipped so its largest-magnitude component is positive.
SymEigResult eig_sym(const Matrix& m);

/// rows x cols matrix with Haar-distributed orthonormal columns (rows >= cols).
Matrix random_orthonormal(RngStream& rng, std::size_t rows, std::size_t cols);

namespace detail {
/// One raw Philox4x32-10 block; exposed for known-answer tests.
std::array<std::uint32_t, 4> philox_block(std::array<std::uint32_t, 4> counter,
                                          std::array<std::uint32_t, 2> key);
}  // namespace detail

}  // namespace subsearch
