// SPDX-License-Identifier: Apache-2.0
#include "subsearch/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "subsearch/errors.hpp"

namespace subsearch {
namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(product >> 32);
  lo = static_cast<std::uint32_t>(product);
}

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kPhiloxW0;
      key[1] += kPhiloxW1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::array<std::uint32_t, 4> detail::philox_block(std::array<std::uint32_t, 4> counter,
                                                  std::array<std::uint32_t, 2> key) {
  return philox4x32_10(counter, key);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {}

void RngStream::refill() {
  const std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
      static_cast<std::uint32_t>(stream_id_), static_cast<std::uint32_t>(stream_id_ >> 32)};
  const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed_),
                                            static_cast<std::uint32_t>(seed_ >> 32)};
  const auto out = philox4x32_10(ctr, key);
  block_[0] = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
  block_[1] = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
  block_pos_ = 0;
  ++counter_;
}

std::uint64_t RngStream::next_u64() {
  if (block_pos_ >= 2) refill();
  return block_[block_pos_++];
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t RngStream::below(std::uint64_t bound) {
  if (bound == 0) throw DomainError("RngStream::below: bound must be positive");
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) return r % bound;
  }
}

double RngStream::normal() {
  if (spare_normal_) {
    const double z = *spare_normal_;
    spare_normal_.reset();
    return z;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  return radius * std::cos(angle);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
  std::uint64_t h = splitmix64(master);
  for (const char c : label) h = splitmix64(h ^ static_cast<unsigned char>(c));
  return h;
}

Vector normal_sample(RngStream& rng, std::size_t n) {
  if (n == 0) throw EmptyRequestError("normal_sample: requested zero draws");
  Vector out(static_cast<Eigen::Index>(n));
  for (auto& x : out) x = rng.normal();
  return out;
}

Vector softmax(const Vector& scores, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw DomainError("softmax: temperature must be positive and finite");
  }
  if (scores.size() == 0) throw EmptyRequestError("softmax: empty score vector");
  if (!scores.allFinite()) throw DomainError("softmax: non-finite score");
  const double top = scores.maxCoeff();
  Vector out = ((scores.array() - top) / temperature).exp().matrix();
  out /= out.sum();
  return out;
}

double cosine_similarity(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DomainError("cosine_similarity: dimension mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw DomainError("cosine_similarity: zero-norm input");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

SymEigResult eig_sym(const Matrix& m) {
  if (m.rows() != m.cols()) throw DomainError("eig_sym: matrix is not square");
  if (m.size() == 0) throw EmptyRequestError("eig_sym: empty matrix");
  if (!m.allFinite()) throw DomainError("eig_sym: non-finite entry");
  const double scale = m.cwiseAbs().maxCoeff();
  const double asymmetry = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asymmetry > 1e-10 * scale) throw DomainError("eig_sym: matrix is not symmetric");

  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw InternalError("eig_sym: solver did not converge");

  // Eigen returns ascending order; reverse with a stable permutation.
  const Eigen::Index n = m.rows();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return solver.eigenvalues()(a) > solver.eigenvalues()(b);
  });

  SymEigResult result{Vector(n), Matrix(n, n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index src = order[static_cast<std::size_t>(k)];
    result.eigenvalues(k) = solver.eigenvalues()(src);
    auto column = solver.eigenvectors().col(src);
    Eigen::Index pivot = 0;
    column.cwiseAbs().maxCoeff(&pivot);
    result.eigenvectors.col(k) = column(pivot) < 0.0 ? Vector(-column) : Vector(column);
  }
  return result;
}

Matrix random_orthonormal(RngStream& rng, std::size_t rows, std::size_t cols) {
  if (cols == 0 || rows < cols) throw DomainError("random_orthonormal: need rows >= cols >= 1");
  const auto r = static_cast<Eigen::Index>(rows);
  const auto c = static_cast<Eigen::Index>(cols);
  Matrix gaussian(r, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < r; ++i) gaussian(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Matrix> qr(gaussian);
  Matrix q = qr.householderQ() * Matrix::Identity(r, c);
  // Positive R diagonal makes the distribution Haar and the output unique.
  const Matrix& packed = qr.matrixQR();
  for (Eigen::Index j = 0; j < c; ++j) {
    if (packed(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

}  // namespace subsearch
