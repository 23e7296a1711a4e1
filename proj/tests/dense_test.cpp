#include "gstiefel/dense.hpp"

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace gstiefel {
namespace {

using testing::random_matrix;
using testing::random_spd;

TEST(Symmetrize, SymmetricInputIsFixedPoint) {
  Rng rng(1);
  Matrix a = random_spd(4, rng, 0.5, 2.0);
  EXPECT_TRUE(symmetrize(a).mat().isApprox(a, 1e-15));
}

TEST(Symmetrize, SkewSymmetricMapsToZero) {
  Rng rng(2);
  Matrix a = random_matrix(5, 5, rng);
  Matrix skew = a - a.transpose();
  EXPECT_EQ(symmetrize(skew).mat().norm(), 0.0);
}

TEST(Symmetrize, HandComputedExample) {
  Matrix a(2, 2);
  a << 0, 2, 0, 0;
  Matrix expected(2, 2);
  expected << 0, 1, 1, 0;
  EXPECT_EQ(symmetrize(a).mat(), expected);
}

TEST(Symmetrize, NonSquareThrows) {
  EXPECT_THROW(symmetrize(Matrix::Zero(2, 3)), DimensionError);
}

TEST(Symmetrize, Idempotent) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a = random_matrix(5, 5, rng);
    Matrix once = symmetrize(a).mat();
    EXPECT_EQ(symmetrize(once).mat(), once);
  }
}

TEST(Symmetrize, ExactlySymmetricStorage) {
  Rng rng(4);
  Matrix a = random_matrix(7, 7, rng);
  SymMatrix sym = symmetrize(a);
  const Matrix& s = sym.mat();
  for (Index i = 0; i < 7; ++i)
    for (Index j = 0; j < 7; ++j) EXPECT_EQ(s(i, j), s(j, i));
}

// <Psi(A), B> = <A, B> for every symmetric B.
TEST(Symmetrize, AdjointPropertyOnSymmetricMatrices) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix a = random_matrix(5, 5, rng);
    Matrix b = random_spd(5, rng, -1.0, 1.0);
    const double lhs = (symmetrize(a).mat().transpose() * b).trace();
    const double rhs = (a.transpose() * b).trace();
    EXPECT_NEAR(lhs, rhs, 1e-12);
  }
}

TEST(Gram, ZeroInputGivesZero) {
  Matrix x = Matrix::Zero(6, 2);
  auto identity_op = [](const Matrix& v) { return v; };
  EXPECT_EQ(gram(x, identity_op).mat(), Matrix::Zero(2, 2));
}

TEST(Gram, OrthonormalColumnsUnderIdentity) {
  Rng rng(6);
  Matrix x = random_matrix(8, 3, rng);
  Eigen::HouseholderQR<Matrix> qr(x);
  Matrix q = Matrix(qr.householderQ()).leftCols(3);
  auto identity_op = [](const Matrix& v) { return v; };
  EXPECT_TRUE(gram(q, identity_op).mat().isApprox(Matrix::Identity(3, 3), 1e-12));
}

TEST(Gram, ScalarCase) {
  Matrix x(1, 1);
  x << 3.0;
  auto twice = [](const Matrix& v) { return Matrix(2.0 * v); };
  EXPECT_DOUBLE_EQ(gram(x, twice)(0, 0), 18.0);
}

TEST(Gram, ShapeMismatchThrows) {
  Matrix x = Matrix::Ones(4, 2);
  auto bad_op = [](const Matrix& v) { return Matrix(v.topRows(2)); };
  EXPECT_THROW(gram(x, bad_op), DimensionError);
}

// Eigenvalues of X^T M X stay >= -1e-10 for PSD actions, here random
// low-rank ones of the form v (v^T X).
TEST(Gram, PsdActionGivesPsdGram) {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    Matrix v = random_matrix(6, 2, rng);
    auto low_rank = [&v](const Matrix& x) { return Matrix(v * (v.transpose() * x)); };
    Matrix x = random_matrix(6, 3, rng);
    Vector eigs = sym_eig(gram(x, low_rank)).values;
    EXPECT_GE(eigs(0), -1e-10);
  }
}

TEST(ConstraintDissolvingOp, IdentityGramKeepsXBitIdentical) {
  Rng rng(8);
  Matrix x = random_matrix(5, 2, rng);
  Matrix ax = constraint_dissolving_op(x, SymMatrix::Identity(2));
  EXPECT_EQ(ax, x);
}

TEST(ConstraintDissolvingOp, ZeroMapsToZero) {
  Matrix x = Matrix::Zero(4, 2);
  EXPECT_EQ(constraint_dissolving_op(x, SymMatrix::Identity(2)), x);
}

TEST(ConstraintDissolvingOp, ScalarExample) {
  // n=2, p=1, M=I, X=(2,0)^T, C=4 -> A(X) = X(3/2 - 2) = (-1, 0)^T.
  Matrix x(2, 1);
  x << 2, 0;
  SymMatrix c = symmetrize(4.0 * Matrix::Identity(1, 1));
  Matrix expected(2, 1);
  expected << -1, 0;
  EXPECT_TRUE(constraint_dissolving_op(x, c).isApprox(expected, 1e-15));
}

TEST(ConstraintDissolvingOp, ShapeMismatchThrows) {
  EXPECT_THROW(constraint_dissolving_op(Matrix::Zero(4, 2), SymMatrix::Identity(3)),
               DimensionError);
}

TEST(SpdInvSqrt, IdentityMapsToIdentity) {
  SymMatrix r = spd_inv_sqrt(SymMatrix::Identity(3));
  EXPECT_TRUE(r.mat().isApprox(Matrix::Identity(3, 3), 1e-14));
}

TEST(SpdInvSqrt, DiagonalExample) {
  Matrix d = Vector{{4.0, 9.0}}.asDiagonal();
  SymMatrix r = spd_inv_sqrt(symmetrize(d));
  EXPECT_NEAR(r(0, 0), 0.5, 1e-14);
  EXPECT_NEAR(r(1, 1), 1.0 / 3.0, 1e-14);
  EXPECT_NEAR(r(0, 1), 0.0, 1e-14);
}

TEST(SpdInvSqrt, ReconstructionIdentity) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix s = random_spd(5, rng, 0.3, 3.0);
    Matrix r = spd_inv_sqrt(symmetrize(s)).mat();
    EXPECT_LT((r * s * r - Matrix::Identity(5, 5)).norm(), 1e-10);
  }
}

TEST(SpdInvSqrt, IllConditionedStillAccurate) {
  Rng rng(10);
  // Condition number up to 1e6.
  Matrix q = testing::random_orthogonal(4, rng);
  Vector eigs{{1e-6, 1e-3, 0.5, 1.0}};
  Matrix s = q * eigs.asDiagonal() * q.transpose();
  Matrix r = spd_inv_sqrt(symmetrize(s)).mat();
  EXPECT_LT((r * s * r - Matrix::Identity(4, 4)).norm(), 1e-9);
}

TEST(SpdInvSqrt, NotPositiveDefiniteThrows) {
  Matrix d = Vector{{1.0, -0.5}}.asDiagonal();
  EXPECT_THROW(spd_inv_sqrt(symmetrize(d)), NotPositiveDefiniteError);
  Matrix tiny = Vector{{1.0, 1e-12}}.asDiagonal();
  EXPECT_THROW(spd_inv_sqrt(symmetrize(tiny)), NotPositiveDefiniteError);
}

TEST(SymEig, IdentityHasUnitEigenvalues) {
  EigenDecomposition eig = sym_eig(SymMatrix::Identity(4));
  EXPECT_TRUE(eig.values.isApprox(Vector::Ones(4), 1e-14));
}

TEST(SymEig, DiagonalSortedAscending) {
  Matrix d = Vector{{3.0, 1.0}}.asDiagonal();
  EigenDecomposition eig = sym_eig(symmetrize(d));
  EXPECT_NEAR(eig.values(0), 1.0, 1e-14);
  EXPECT_NEAR(eig.values(1), 3.0, 1e-14);
  // Eigenvectors are the permuted identity (up to sign).
  EXPECT_NEAR(std::abs(eig.vectors(1, 0)), 1.0, 1e-14);
  EXPECT_NEAR(std::abs(eig.vectors(0, 1)), 1.0, 1e-14);
}

TEST(SymEig, ResidualSmall) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix s = random_spd(6, rng, -2.0, 2.0);
    EigenDecomposition eig = sym_eig(symmetrize(s));
    EXPECT_LT((s * eig.vectors - eig.vectors * eig.values.asDiagonal()).norm(), 1e-10);
  }
}

TEST(FeasibilityViolation, KnownValues) {
  EXPECT_EQ(feasibility_violation(SymMatrix::Identity(3)), 0.0);
  EXPECT_NEAR(feasibility_violation(SymMatrix::Zero(4)), 2.0, 1e-15);  // sqrt(p)
  Matrix d = Vector{{1.1, 0.9}}.asDiagonal();
  EXPECT_NEAR(feasibility_violation(symmetrize(d)), std::sqrt(0.02), 1e-15);
}

}  // namespace
}  // namespace gstiefel
