#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nsrgs/blockmat.hpp"
#include "test_util.hpp"

using namespace nsrgs;
using nsrgs::testing::gaussian;
using nsrgs::testing::random_near_orthogonal;
using nsrgs::testing::random_orthogonal;
using nsrgs::testing::random_orthogonal_stack;

namespace {

Matrix diag2(double a, double b) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

BlockStack column(std::initializer_list<double> v) {
  BlockStack s(static_cast<Index>(v.size()), 1);
  Index i = 0;
  for (double x : v) s.block(i++)(0, 0) = x;
  return s;
}

}  // namespace

TEST(MatrixSign, IdentityIsFixed) {
  const SignResult r = matrix_sign_svd(Matrix::Identity(4, 4));
  EXPECT_LE((r.value - Matrix::Identity(4, 4)).norm(), 1e-14);
  EXPECT_NEAR(r.min_singular, 1.0, 1e-14);
}

TEST(MatrixSign, PositiveScalingInvariance) {
  std::mt19937_64 rng(11);
  const Matrix q = random_orthogonal(rng, 5);
  const SignResult r = matrix_sign_svd(3.7 * q);
  EXPECT_LE((r.value - q).norm(), 1e-12);
  EXPECT_NEAR(r.min_singular, 3.7, 1e-12);
  EXPECT_LE(orthogonality_defect(r.value), kOrthTol);
}

TEST(MatrixSign, DiagonalCase) {
  const SignResult r = matrix_sign_svd(diag2(2.0, -3.0));
  EXPECT_LE((r.value - diag2(1.0, -1.0)).norm(), 1e-14);
  EXPECT_NEAR(r.min_singular, 2.0, 1e-14);
}

TEST(MatrixSign, SingularInputRejected) {
  EXPECT_THROW(matrix_sign_svd(diag2(1.0, 0.0)), SingularInput);
  EXPECT_THROW(matrix_sign_svd(Matrix::Zero(3, 3)), SingularInput);
  EXPECT_THROW(matrix_sign_svd(diag2(1.0, 1e-13)), SingularInput);
  EXPECT_NO_THROW(matrix_sign_svd(diag2(1.0, 1e-11)));
}

TEST(MatrixSign, MinSingularMatchesInputSpectrum) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = gaussian(rng, 6, 6);
    Eigen::JacobiSVD<Matrix> svd(a);
    EXPECT_NEAR(matrix_sign_svd(a).min_singular, svd.singularValues()(5), 1e-12);
  }
}

TEST(NewtonSchulz, OrthogonalIsFixedPoint) {
  std::mt19937_64 rng(5);
  for (Index d : {1, 2, 3, 7, 25}) {
    const Matrix q = random_orthogonal(rng, d);
    for (int t : {0, 1, 3, 6}) EXPECT_LE((newton_schulz(q, t) - q).norm(), 1e-12) << "d=" << d << " t=" << t;
  }
}

TEST(NewtonSchulz, DiagonalOneStepMatchesScalarRecursion) {
  // Singular values evolve independently under s <- s (3 - s^2) / 2.
  const auto scalar = [](double s) { return 0.5 * s * (3.0 - s * s); };
  const Matrix s1 = newton_schulz(diag2(0.9, 1.1), 1);
  EXPECT_NEAR(s1(0, 0), scalar(0.9), 1e-15);
  EXPECT_NEAR(s1(1, 1), scalar(1.1), 1e-15);
  EXPECT_NEAR(s1(0, 0), 0.9855, 1e-12);
  EXPECT_NEAR(s1(1, 1), 0.9845, 1e-12);
  EXPECT_EQ(s1(0, 1), 0.0);
}

TEST(NewtonSchulz, ThreeStepsWithinErrorBound) {
  std::mt19937_64 rng(17);
  const Index d = 4;
  // Singular values exactly sqrt(0.5) and sqrt(1.5) so ||I - a^T a||_2 = 0.5.
  Vector s(d);
  s << std::sqrt(0.5), 0.9, 1.1, std::sqrt(1.5);
  const Matrix a = random_orthogonal(rng, d) * s.asDiagonal() * random_orthogonal(rng, d).transpose();
  ASSERT_NEAR(ns_defect(a), 0.5, 1e-12);
  const Matrix s3 = newton_schulz(a, 3);
  EXPECT_LE(spectral_norm(s3 - matrix_sign_svd(a).value), std::pow(0.5, 8));
}

TEST(NewtonSchulz, DivergenceDetected) {
  // ||I - a^T a|| = 8 >> 1: iterates blow up.
  EXPECT_THROW(newton_schulz(3.0 * Matrix::Identity(3, 3), 3), DivergenceDetected);
  EXPECT_THROW(newton_schulz(Matrix::Identity(2, 2), -1), InvalidArgs);
}

// Quadratic convergence chain on random inputs inside the contraction region.
TEST(NewtonSchulzProperty, ErrorChainHoldsAtEveryIterate) {
  std::mt19937_64 rng(2024);
  int checked = 0;
  for (Index d : {2, 3, 5, 25}) {
    for (int trial = 0; trial < 250; ++trial) {
      const Matrix a = random_near_orthogonal(rng, d, 0.9);
      const double delta = ns_defect(a);
      ASSERT_LE(delta, 0.9 + 1e-12);
      const Matrix sgn = matrix_sign_svd(a).value;
      for (int t = 1; t <= 3; ++t) {
        const Matrix st = newton_schulz(a, t);
        const double err = spectral_norm(st - sgn);
        const double defect = ns_defect(st);
        EXPECT_LE(err, defect + 1e-12);
        EXPECT_LE(defect, std::pow(delta, std::pow(2.0, t)) + 1e-12);
        ++checked;
      }
    }
  }
  EXPECT_EQ(checked, 3000);
}

TEST(TangentProject, IdentityBaseGivesSkewPart) {
  std::mt19937_64 rng(1);
  const Matrix g = gaussian(rng, 4, 4);
  EXPECT_LE((tangent_project(Matrix::Identity(4, 4), g) - 0.5 * (g - g.transpose())).norm(), 1e-15);
}

TEST(TangentProject, TangentFixedNormalAnnihilated) {
  std::mt19937_64 rng(2);
  const Matrix x = random_orthogonal(rng, 5);
  const Matrix h0 = gaussian(rng, 5, 5);
  const Matrix skew = h0 - h0.transpose();
  const Matrix sym = h0 + h0.transpose();
  EXPECT_LE((tangent_project(x, x * skew) - x * skew).norm(), 1e-12);
  EXPECT_LE(tangent_project(x, x * sym).norm(), 1e-12);
}

TEST(TangentProjectProperty, IdempotentAndSkewOnManifold) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const Index d = 1 + trial % 6;
    const Matrix x = random_orthogonal(rng, d);
    const Matrix g = gaussian(rng, d, d);
    const Matrix p = tangent_project(x, g);
    EXPECT_LE((tangent_project(x, p) - p).norm(), 1e-12);
    const Matrix h = x.transpose() * p;
    EXPECT_LE((h + h.transpose()).norm(), 1e-12);
  }
}

TEST(StackGram, OrthogonalStackGivesNIdentity) {
  std::mt19937_64 rng(4);
  const BlockStack z = random_orthogonal_stack(rng, 7, 3);
  EXPECT_LE((stack_gram(z, z) - 7.0 * Matrix::Identity(3, 3)).norm(), 1e-12);
}

TEST(StackGram, ScalarSumAndZero) {
  EXPECT_DOUBLE_EQ(stack_gram(column({1, 1, 1}), column({1, 1, -1}))(0, 0), 1.0);
  std::mt19937_64 rng(15);
  EXPECT_EQ(stack_gram(BlockStack(4, 2), random_orthogonal_stack(rng, 4, 2)).norm(), 0.0);
  EXPECT_THROW(stack_gram(BlockStack(3, 2), BlockStack(4, 2)), DimensionMismatch);
}

TEST(OptimalRotation, EqualStacksGiveIdentity) {
  std::mt19937_64 rng(6);
  const BlockStack z = random_orthogonal_stack(rng, 5, 3);
  EXPECT_LE((optimal_rotation(z, z).value - Matrix::Identity(3, 3)).norm(), 1e-12);
}

TEST(OptimalRotation, ScalarBruteForce) {
  const BlockStack x = column({1, 1, 1});
  const BlockStack y = column({1, 1, -1});
  // Brute force over Q in {+1, -1}.
  double best_q = 0, best = 1e300;
  for (double q : {1.0, -1.0}) {
    const double v = (x.matrix() - y.matrix() * q).norm();
    if (v < best) best = v, best_q = q;
  }
  EXPECT_EQ(optimal_rotation(y, x).value(0, 0), best_q);
  EXPECT_EQ(best_q, 1.0);
}

TEST(OptimalRotation, AntipodalIsSingular) {
  EXPECT_THROW(optimal_rotation(column({1, -1}), column({1, 1})), SingularInput);
}

// For d = 1, exhaustively compare against both sign choices.
TEST(OptimalRotationProperty, ScalarMatchesBruteForce) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 2 + trial % 7;
    BlockStack x(n, 1), y(n, 1);
    for (Index i = 0; i < n; ++i) {
      x.block(i)(0, 0) = coin(rng) ? 1.0 : -1.0;
      y.block(i)(0, 0) = coin(rng) ? 1.0 : -1.0;
    }
    const double plus = (x.matrix() - y.matrix()).norm();
    const double minus = (x.matrix() + y.matrix()).norm();
    try {
      const double q = optimal_rotation(y, x).value(0, 0);
      EXPECT_NEAR((x.matrix() - y.matrix() * q).norm(), std::min(plus, minus), 1e-15);
    } catch (const SingularInput&) {
      EXPECT_DOUBLE_EQ(plus, minus);
    }
  }
}

TEST(NuclearNorm, KnownValues) {
  EXPECT_NEAR(nuclear_norm(Matrix::Identity(6, 6)), 6.0, 1e-14);
  EXPECT_NEAR(nuclear_norm(diag2(2.0, -3.0)), 5.0, 1e-14);
}

TEST(NuclearNorm, MatchesTraceOfPolarForm) {
  // ||a||_* = tr(sgn(a)^T a), independent of the singular-value route.
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix a = gaussian(rng, 5, 5);
    const Matrix q = matrix_sign_svd(a).value;
    EXPECT_NEAR(nuclear_norm(a), (q.transpose() * a).trace(), 1e-12 * (1.0 + nuclear_norm(a)));
  }
}

TEST(NuclearNormProperty, DistanceIdentity) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 3 + trial % 5;
    // d = 1 with +-1 blocks can make Y^T X exactly zero; start at d = 2.
    const Index d = 2 + trial % 3;
    const BlockStack x = random_orthogonal_stack(rng, n, d);
    const BlockStack y = random_orthogonal_stack(rng, n, d);
    const Matrix q = optimal_rotation(y, x).value;
    const double direct = (x.matrix() - y.matrix() * q).squaredNorm();
    const double via_nuclear = 2.0 * static_cast<double>(n * d) - 2.0 * nuclear_norm(stack_gram(y, x));
    EXPECT_NEAR(direct, via_nuclear, 1e-10 * std::max(1.0, direct));
  }
}

TEST(SignStabilityProperty, LipschitzBound) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const Index d = 2 + trial % 5;
    const Matrix x = gaussian(rng, d, d);
    const Matrix y = x + 0.3 * gaussian(rng, d, d);
    const SignResult sx = matrix_sign_svd(x);
    const SignResult sy = matrix_sign_svd(y);
    EXPECT_LE((sx.value - sy.value).norm(),
              2.0 * (x - y).norm() / (sx.min_singular + sy.min_singular) + 1e-12);
  }
}

TEST(SignBlocks, CollectsEverySingularBlock) {
  BlockStack y(3, 2);
  y.block(0) = Matrix::Identity(2, 2);
  y.block(2) = diag2(1.0, -2.0);
  try {
    sign_blocks(y);
    FAIL() << "expected SingularInput";
  } catch (const SingularInput& e) {
    ASSERT_EQ(e.blocks().size(), 1u);
    EXPECT_EQ(e.blocks()[0], 1u);
  }
  y.block(1) = 2.0 * Matrix::Identity(2, 2);
  const BlockStack s = sign_blocks(y);
  EXPECT_TRUE(s.orthogonal());
  EXPECT_LE(max_block_orthogonality_defect(s), kOrthTol);
}

TEST(BlockStackType, FlagClearedByMutation) {
  std::mt19937_64 rng(14);
  BlockStack s = sign_blocks(random_orthogonal_stack(rng, 3, 2));
  ASSERT_TRUE(s.orthogonal());
  s.block(0) *= 2.0;
  EXPECT_FALSE(s.orthogonal());
  EXPECT_THROW(BlockStack(Matrix::Zero(5, 2), 2), DimensionMismatch);
}
