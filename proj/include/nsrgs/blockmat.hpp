#pragma once

/** Dense block-matrix kernel for synchronization over O(d).
 *
 * A BlockStack is an (n*d) x d matrix read as n stacked d x d blocks. The
 * routines here are the building blocks of every solver: the exact matrix
 * sign (polar factor) via SVD, its multiplication-only Newton-Schulz
 * approximation, the tangent-space projection onto O(d), and the stack
 * reductions used for distances up to a global rotation.
 */

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nsrgs/error.hpp"

namespace nsrgs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Orthogonality tolerance for outputs of the exact sign.
inline constexpr double kOrthTol = 1e-10;
/// sgn(a) is declared undefined when sigma_min(a) <= kSingularRel * sigma_max(a).
inline constexpr double kSingularRel = 1e-12;

class BlockStack {
 public:
  BlockStack() = default;

  /// Zero-filled stack of n blocks of size d x d.
  BlockStack(Index n, Index d) : data_(Matrix::Zero(n * d, d)), n_(n), d_(d) {}

  BlockStack(Matrix data, Index d) : data_(std::move(data)), d_(d) {
    if (d_ < 1 || data_.cols() != d_ || data_.rows() % d_ != 0)
      throw DimensionMismatch("stack data must be (n*d) x d with d >= 1");
    n_ = data_.rows() / d_;
  }

  static BlockStack from_blocks(std::span<const Matrix> blocks) {
    if (blocks.empty()) throw DimensionMismatch("empty block list");
    const Index d = blocks.front().rows();
    BlockStack s(static_cast<Index>(blocks.size()), d);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      if (blocks[i].rows() != d || blocks[i].cols() != d)
        throw DimensionMismatch("block " + std::to_string(i) + " is not " +
                                std::to_string(d) + "x" + std::to_string(d));
      s.data_.middleRows(static_cast<Index>(i) * d, d) = blocks[i];
    }
    return s;
  }

  Index n() const noexcept { return n_; }
  Index d() const noexcept { return d_; }
  bool empty() const noexcept { return n_ == 0; }

  auto block(Index i) const { return data_.middleRows(i * d_, d_); }
  /// Mutable access drops the orthogonality flag.
  auto block(Index i) {
    orthogonal_ = false;
    return data_.middleRows(i * d_, d_);
  }

  const Matrix& matrix() const noexcept { return data_; }
  Matrix& mutable_matrix() noexcept {
    orthogonal_ = false;
    return data_;
  }

  /// Set only by exact-sign producers (each block orthogonal to kOrthTol).
  bool orthogonal() const noexcept { return orthogonal_; }
  void mark_orthogonal() noexcept { orthogonal_ = true; }

  /// Right-multiplies every block by q (global rotation / gauge change).
  BlockStack times(const Matrix& q) const {
    BlockStack out(data_ * q, d_);
    return out;
  }

  bool operator==(const BlockStack& other) const {
    return n_ == other.n_ && d_ == other.d_ && data_ == other.data_;
  }

 private:
  Matrix data_;
  Index n_ = 0;
  Index d_ = 0;
  bool orthogonal_ = false;
};

enum class SignMethod { ExactSvd, NewtonSchulz };

struct SignResult {
  Matrix value;
  double min_singular = 0.0;  ///< smallest singular value of the input
  SignMethod method = SignMethod::ExactSvd;
  int newton_schulz_steps = 0;
};

inline double orthogonality_defect(const Matrix& b) {
  return (b.transpose() * b - Matrix::Identity(b.cols(), b.cols())).norm();
}

/// Spectral norm of a symmetric matrix.
inline double symmetric_spectral_norm(const Matrix& s) {
  if (s.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

/// ||I - a^T a||_2, the Newton-Schulz contraction radius of a.
inline double ns_defect(const Matrix& a) {
  return symmetric_spectral_norm(Matrix::Identity(a.cols(), a.cols()) - a.transpose() * a);
}

/// sgn(a) = U V^T from the full SVD a = U S V^T.
inline SignResult matrix_sign_svd(const Matrix& a) {
  if (a.rows() != a.cols() || a.rows() == 0)
    throw DimensionMismatch("matrix_sign_svd expects a non-empty square block");
  if (!a.allFinite()) throw SingularInput("non-finite entries in sign input");
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const double smax = s(0);
  const double smin = s(s.size() - 1);
  if (!(smin > kSingularRel * smax))
    throw SingularInput("sigma_min = " + std::to_string(smin) +
                        " <= 1e-12 * sigma_max = " + std::to_string(kSingularRel * smax));
  return {svd.matrixU() * svd.matrixV().transpose(), smin, SignMethod::ExactSvd, 0};
}

/** Newton-Schulz approximation of sgn(a).
 *
 * Runs S_{k+1} = S_k (3I - S_k^T S_k) / 2 from S_0 = a for t_s steps, with no
 * pre-scaling. Converges quadratically when ||I - a^T a||_2 < 1; outside
 * that region the iterates blow up, which is reported as DivergenceDetected
 * once ||S_k||_F exceeds 10 sqrt(d).
 */
inline Matrix newton_schulz(const Matrix& a, int t_s) {
  if (a.rows() != a.cols()) throw DimensionMismatch("newton_schulz expects a square block");
  if (t_s < 0) throw InvalidArgs("newton_schulz step count must be >= 0");
  const Index d = a.rows();
  const double limit = 10.0 * std::sqrt(static_cast<double>(d));
  Matrix s = a;
  Matrix gram(d, d);
  for (int k = 0; k < t_s; ++k) {
    gram.noalias() = s.transpose() * s;
    gram = (3.0 * Matrix::Identity(d, d) - gram).eval();
    s = (0.5 * (s * gram)).eval();
    const double norm = s.norm();
    if (!std::isfinite(norm) || norm > limit)
      throw DivergenceDetected("||S_" + std::to_string(k + 1) + "||_F = " + std::to_string(norm) +
                               " exceeds 10 sqrt(d)");
  }
  return s;
}

/// (g - x g^T x) / 2; the tangent projection onto T_x O(d), applied as-is
/// even when x is only approximately orthogonal.
inline Matrix tangent_project(const Matrix& x, const Matrix& g) {
  if (x.rows() != x.cols() || g.rows() != x.rows() || g.cols() != x.cols())
    throw DimensionMismatch("tangent_project expects two d x d blocks");
  return 0.5 * (g - x * g.transpose() * x);
}

inline void require_same_shape(const BlockStack& a, const BlockStack& b) {
  if (a.n() != b.n() || a.d() != b.d())
    throw DimensionMismatch("stacks differ: (" + std::to_string(a.n()) + "," +
                            std::to_string(a.d()) + ") vs (" + std::to_string(b.n()) + "," +
                            std::to_string(b.d()) + ")");
}

/// Y^T X = sum_i Y_i^T X_i, accumulated in ascending block order.
inline Matrix stack_gram(const BlockStack& y, const BlockStack& x) {
  require_same_shape(y, x);
  Matrix acc = Matrix::Zero(x.d(), x.d());
  for (Index i = 0; i < x.n(); ++i) acc.noalias() += y.block(i).transpose() * x.block(i);
  return acc;
}

/// Q* = sgn(Y^T X), the minimizer of ||X - Y Q||_F over O(d).
inline SignResult optimal_rotation(const BlockStack& y, const BlockStack& x) {
  return matrix_sign_svd(stack_gram(y, x));
}

inline double nuclear_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues().sum();
}

/// Blockwise exact sign. Every singular block is collected before throwing.
inline BlockStack sign_blocks(const BlockStack& y) {
  BlockStack out(y.n(), y.d());
  std::vector<std::size_t> bad;
  std::string first_msg;
  for (Index i = 0; i < y.n(); ++i) {
    try {
      out.block(i) = matrix_sign_svd(y.block(i)).value;
    } catch (const SingularInput& e) {
      if (bad.empty()) first_msg = e.what();
      bad.push_back(static_cast<std::size_t>(i));
    }
  }
  if (!bad.empty())
    throw SingularInput("block " + std::to_string(bad.front()) + " (" + first_msg + ")", bad);
  out.mark_orthogonal();
  return out;
}

inline double max_block_orthogonality_defect(const BlockStack& x) {
  double worst = 0.0;
  for (Index i = 0; i < x.n(); ++i) worst = std::max(worst, orthogonality_defect(x.block(i)));
  return worst;
}

/// max_i ||I - X_i^T X_i||_2.
inline double max_block_ns_defect(const BlockStack& x) {
  double worst = 0.0;
  for (Index i = 0; i < x.n(); ++i) worst = std::max(worst, ns_defect(x.block(i)));
  return worst;
}

}  // namespace nsrgs
