#pragma once

// Evaluation quantities for estimates defined up to a global O(d) rotation.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "nsrgs/blockmat.hpp"

namespace nsrgs {

struct Distance {
  double value = 0.0;
  /// Aligning rotation Q* = sgn(Y^T X); absent when Y^T X is singular and the
  /// nuclear-norm identity was used instead.
  std::optional<Matrix> q;
};

/// Polar factor U V^T without the rank check; any minimizer when singular.
inline Matrix polar_factor(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

/// ||X - Y Q||_F, accumulated blockwise in ascending order.
inline double aligned_residual(const BlockStack& x, const BlockStack& y, const Matrix& q) {
  double acc = 0.0;
  for (Index i = 0; i < x.n(); ++i) acc += (x.block(i) - y.block(i) * q).squaredNorm();
  return std::sqrt(acc);
}

/** d_F(X, Y) = min over Q in O(d) of ||X - Y Q||_F.
 *
 * Falls back to sqrt(||X||^2 + ||Y||^2 - 2 ||Y^T X||_*) when Y^T X is
 * singular; for orthogonal blocks this is sqrt(2nd - 2 ||Y^T X||_*).
 */
inline Distance dist_frob(const BlockStack& x, const BlockStack& y) {
  require_same_shape(x, y);
  const Matrix gram = stack_gram(y, x);
  try {
    Matrix q = matrix_sign_svd(gram).value;
    const double value = aligned_residual(x, y, q);
    return {value, std::move(q)};
  } catch (const SingularInput&) {
    const double sq = x.matrix().squaredNorm() + y.matrix().squaredNorm() - 2.0 * nuclear_norm(gram);
    return {std::sqrt(std::max(0.0, sq)), std::nullopt};
  }
}

/** ||Z Z^T - X X^T||_F / ||Z Z^T||_F without forming nd x nd matrices.
 *
 * With B = Z Q for an orthogonal Q and E = X - B, the difference is
 * B E^T + E X^T, whose squared norm expands into d x d Grams that are all
 * O(||E||^2); this keeps full precision near exact recovery. If Z^T X is
 * singular the plain Gram expansion ||Z^T Z||^2 + ||X^T X||^2 - 2||Z^T X||^2
 * is used.
 */
inline double rel_error(const BlockStack& x, const BlockStack& z) {
  require_same_shape(x, z);
  const Matrix ztz = stack_gram(z, z);
  const double denom = ztz.norm();
  if (denom == 0.0) throw DimensionMismatch("rel_error reference has ||ZZ^T|| = 0");
  const Matrix ztx = stack_gram(z, x);
  double num_sq = 0.0;
  try {
    const Matrix q = matrix_sign_svd(ztx).value;
    const Matrix b = z.matrix() * q;
    const Matrix e = x.matrix() - b;
    const Matrix ete = e.transpose() * e;
    const Matrix btb = b.transpose() * b;
    const Matrix xtx = x.matrix().transpose() * x.matrix();
    const Matrix bte = b.transpose() * e;
    const Matrix xte = x.matrix().transpose() * e;
    num_sq = btb.cwiseProduct(ete).sum() + ete.cwiseProduct(xtx).sum() +
             2.0 * bte.cwiseProduct(xte.transpose()).sum();
  } catch (const SingularInput&) {
    const Matrix xtx = stack_gram(x, x);
    num_sq = ztz.squaredNorm() + xtx.squaredNorm() - 2.0 * ztx.squaredNorm();
  }
  return std::sqrt(std::max(0.0, num_sq)) / denom;
}

struct EvalReport {
  double d_f = 0.0;
  double rel_err = 0.0;
  double mse = 0.0;
  std::vector<double> residuals;  ///< ||Xhat_i - X_i Q||_F per node
  Matrix q_align;
};

/// One aligning rotation Q* (truth -> estimate) shared by every field.
inline EvalReport evaluate(const BlockStack& xhat, const BlockStack& truth) {
  require_same_shape(xhat, truth);
  const Distance dist = dist_frob(xhat, truth);
  EvalReport r;
  r.q_align = dist.q ? *dist.q : polar_factor(stack_gram(truth, xhat));
  r.residuals.reserve(static_cast<std::size_t>(xhat.n()));
  double sq = 0.0;
  for (Index i = 0; i < xhat.n(); ++i) {
    const double ri = (xhat.block(i) - truth.block(i) * r.q_align).norm();
    r.residuals.push_back(ri);
    sq += ri * ri;
  }
  r.d_f = std::sqrt(sq);
  r.mse = sq / static_cast<double>(xhat.n());
  r.rel_err = rel_error(xhat, truth);
  return r;
}

}  // namespace nsrgs
