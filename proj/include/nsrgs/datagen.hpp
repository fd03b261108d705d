#pragma once

// Synthetic synchronization instances: Haar-like ground truth on O(d) and the
// incomplete Gaussian observation model A_ij = Z_i Z_j^T + sigma W_ij on a
// Bernoulli(p) subset of unordered pairs.

#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include "nsrgs/blockmat.hpp"

namespace nsrgs {

/** Symmetric n x n grid of d x d blocks with an observation mask.
 *
 * Stored densely as the (n*d) x (n*d) matrix A, with zero diagonal blocks and
 * zero blocks on unobserved pairs. Column panel i of A is therefore the
 * stack (A_1i; ...; A_ni) and A * X aggregates sum_j A_ij X_j over observed j.
 */
class BlockObservation {
 public:
  BlockObservation() = default;
  BlockObservation(Index n, Index d)
      : dense_(Matrix::Zero(n * d, n * d)), mask_(Matrix::Zero(n, n)), n_(n), d_(d) {
    if (n < 2 || d < 1) throw InvalidArgs("observation needs n >= 2 and d >= 1");
  }

  Index n() const noexcept { return n_; }
  Index d() const noexcept { return d_; }

  const Matrix& dense() const noexcept { return dense_; }
  /// n x n 0/1 matrix, symmetric, zero diagonal.
  const Matrix& mask() const noexcept { return mask_; }

  auto block(Index i, Index j) const { return dense_.block(i * d_, j * d_, d_, d_); }
  bool observed(Index i, Index j) const { return mask_(i, j) != 0.0; }

  /// Stores m at (i,j) and m^T at (j,i); i != j.
  template <typename Derived>
  void set_block(Index i, Index j, const Eigen::MatrixBase<Derived>& m) {
    if (i == j) throw InvalidArgs("self-loops are excluded from the observation");
    if (m.rows() != d_ || m.cols() != d_) throw DimensionMismatch("observed block has wrong size");
    dense_.block(i * d_, j * d_, d_, d_) = m;
    dense_.block(j * d_, i * d_, d_, d_) = m.transpose();
    if (mask_(i, j) == 0.0) ++pairs_;
    mask_(i, j) = mask_(j, i) = 1.0;
  }

  void clear_block(Index i, Index j) {
    dense_.block(i * d_, j * d_, d_, d_).setZero();
    dense_.block(j * d_, i * d_, d_, d_).setZero();
    if (mask_(i, j) != 0.0) --pairs_;
    mask_(i, j) = mask_(j, i) = 0.0;
  }

  /// Unordered observed pairs.
  Index observed_pairs() const noexcept { return pairs_; }
  Index degree(Index i) const { return static_cast<Index>(mask_.row(i).sum()); }

  double observed_fraction() const {
    return static_cast<double>(pairs_) / (0.5 * static_cast<double>(n_ * (n_ - 1)));
  }

  /// Nominal sampling rate p; defaults to the observed fraction.
  double sampling_rate() const { return sampling_rate_ ? *sampling_rate_ : observed_fraction(); }
  void set_sampling_rate(double p) { sampling_rate_ = p; }

 private:
  Matrix dense_;
  Matrix mask_;
  Index n_ = 0;
  Index d_ = 0;
  Index pairs_ = 0;
  std::optional<double> sampling_rate_;
};

struct SyncInstance {
  Index n = 0;
  Index d = 0;
  double sigma = 0.0;  ///< 0 for ingested data (unknown)
  double p = 1.0;
  std::uint64_t seed = 0;
  BlockObservation observation;
  std::optional<BlockStack> ground_truth;
};

/// SplitMix64 finalizer; derives independent stream seeds from one user seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

/// d x d i.i.d. N(0,1), entries drawn in column-major order.
inline Matrix gaussian_block(Rng& rng, Index d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(d, d);
  for (Index c = 0; c < d; ++c)
    for (Index r = 0; r < d; ++r) m(r, c) = normal(rng);
  return m;
}

inline BlockStack sample_ground_truth(Index n, Index d, std::uint64_t seed) {
  if (n < 2 || d < 1) throw InvalidArgs("ground truth needs n >= 2 and d >= 1");
  Rng rng(seed);
  BlockStack z(n, d);
  for (Index i = 0; i < n; ++i) {
    Matrix g = gaussian_block(rng, d);
    for (int attempt = 0;; ++attempt) {
      try {
        z.block(i) = matrix_sign_svd(g).value;
        break;
      } catch (const SingularInput&) {
        if (attempt < 3) {
          g = gaussian_block(rng, d);
        } else {
          g += 1e-3 * Matrix::Identity(d, d);
        }
      }
    }
  }
  z.mark_orthogonal();
  return z;
}

/** Incomplete noisy observation of z.
 *
 * Unordered pairs i < j are visited in ascending (i, j) order. Each draws one
 * uniform for the Bernoulli(p) mask and, when observed, d*d normals for W_ij.
 */
inline BlockObservation assemble_observation(const BlockStack& z, double sigma, double p,
                                             std::uint64_t seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgs("sigma must be >= 0");
  if (!(p > 0.0 && p <= 1.0)) throw InvalidArgs("p must lie in (0, 1]");
  const Index n = z.n();
  const Index d = z.d();
  BlockObservation obs(n, d);
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix m(d, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      if (unif(rng) >= p) continue;
      m.noalias() = z.block(i) * z.block(j).transpose();
      const Matrix w = gaussian_block(rng, d);
      if (sigma != 0.0) m += sigma * w;
      obs.set_block(i, j, m);
    }
  }
  obs.set_sampling_rate(p);
  return obs;
}

/// Ground truth from `seed`; the observation from a derived stream.
inline SyncInstance make_instance(Index n, Index d, double sigma, double p, std::uint64_t seed) {
  SyncInstance inst;
  inst.n = n;
  inst.d = d;
  inst.sigma = sigma;
  inst.p = p;
  inst.seed = seed;
  inst.ground_truth = sample_ground_truth(n, d, seed);
  inst.observation = assemble_observation(*inst.ground_truth, sigma, p, derive_seed(seed, 1));
  return inst;
}

}  // namespace nsrgs
