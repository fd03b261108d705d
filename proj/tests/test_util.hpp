#pragma once

// Random generators shared by the unit tests. They deliberately avoid the
// library's own sampling code so that generated fixtures stay independent of
// the code under test.

#include <random>

#include <Eigen/Dense>

#include "nsrgs/blockmat.hpp"

namespace nsrgs::testing {

inline Matrix gaussian(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  return m;
}

/// Orthogonal factor of a Gaussian matrix via QR with sign fix.
inline Matrix random_orthogonal(std::mt19937_64& rng, Index d) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(rng, d, d));
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index k = 0; k < d; ++k)
    if (r(k, k) < 0) q.col(k) *= -1.0;
  return q;
}

inline BlockStack random_orthogonal_stack(std::mt19937_64& rng, Index n, Index d) {
  BlockStack s(n, d);
  for (Index i = 0; i < n; ++i) s.block(i) = random_orthogonal(rng, d);
  return s;
}

/// a = U diag(s) V^T with singular values drawn so that ||I - a^T a||_2 <= radius.
inline Matrix random_near_orthogonal(std::mt19937_64& rng, Index d, double radius) {
  std::uniform_real_distribution<double> unif(std::sqrt(1.0 - radius), std::sqrt(1.0 + radius));
  Vector s(d);
  for (Index k = 0; k < d; ++k) s(k) = unif(rng);
  return random_orthogonal(rng, d) * s.asDiagonal() * random_orthogonal(rng, d).transpose();
}

}  // namespace nsrgs::testing
