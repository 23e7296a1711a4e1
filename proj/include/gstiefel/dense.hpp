// Dense matrix kernels shared by the whole library: symmetrization, Gram
// matrices under a linear constraint action, the constraint dissolving
// operator, and small symmetric eigen-factorizations.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

namespace gstiefel {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using Rng = std::mt19937_64;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NotPositiveDefiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown when an optional capability (objective value, Hessian action, ...)
// is required but was not supplied.
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw DimensionError(what);
}

inline std::string shape_str(const Matrix& a) {
  return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

}  // namespace detail

/// A p-by-p matrix that is symmetric entry-for-entry. Instances can only be
/// produced through symmetrize(), gram(), or the named factories below, so
/// the symmetry is structural rather than a convention.
class SymMatrix {
 public:
  SymMatrix() = default;

  static SymMatrix Identity(Index p) { return SymMatrix(Matrix::Identity(p, p)); }
  static SymMatrix Zero(Index p) { return SymMatrix(Matrix::Zero(p, p)); }

  const Matrix& mat() const { return m_; }
  Index dim() const { return m_.rows(); }
  double operator()(Index i, Index j) const { return m_(i, j); }

 private:
  explicit SymMatrix(Matrix m) : m_(std::move(m)) {}
  friend SymMatrix symmetrize(const Matrix&);

  Matrix m_;
};

/// Psi(A) = (A + A^T)/2. The elementwise evaluation makes the output exactly
/// symmetric in floating point, not just up to rounding.
inline SymMatrix symmetrize(const Matrix& a) {
  detail::require(a.rows() == a.cols(),
                  "symmetrize: input must be square, got " + detail::shape_str(a));
  return SymMatrix(0.5 * (a + a.transpose()).eval());
}

/// X^T (M X) for a constraint action M given as a matrix-free operator on
/// n-by-p matrices. The product is symmetrized to absorb round-off asymmetry.
template <class ApplyM>
SymMatrix gram(const Matrix& x, ApplyM&& apply_m) {
  Matrix mx = apply_m(x);
  detail::require(mx.rows() == x.rows() && mx.cols() == x.cols(),
                  "gram: operator output " + detail::shape_str(mx) +
                      " does not match input " + detail::shape_str(x));
  return symmetrize(x.transpose() * mx);
}

/// A(X) = X (3/2 I - 1/2 C); the caller supplies C = X^T M X or a tracker
/// estimate of it.
inline Matrix constraint_dissolving_op(const Matrix& x, const SymMatrix& c) {
  detail::require(c.dim() == x.cols(),
                  "constraint_dissolving_op: C is " + detail::shape_str(c.mat()) +
                      " but X has " + std::to_string(x.cols()) + " columns");
  const Index p = x.cols();
  return x * (1.5 * Matrix::Identity(p, p) - 0.5 * c.mat());
}

struct EigenDecomposition {
  Vector values;   // ascending
  Matrix vectors;  // orthonormal columns, S * vectors = vectors * diag(values)
};

// Symmetric eigendecompositions here are only ever needed for p-by-p
// trackers and test-oracle matrices; anything larger is a usage bug.
inline constexpr Index kSymEigMaxDim = 4096;

inline EigenDecomposition sym_eig(const SymMatrix& s) {
  detail::require(s.dim() <= kSymEigMaxDim,
                  "sym_eig: dimension " + std::to_string(s.dim()) +
                      " exceeds the small-matrix bound " + std::to_string(kSymEigMaxDim));
  Eigen::SelfAdjointEigenSolver<Matrix> es(s.mat());
  if (es.info() != Eigen::Success)
    throw std::runtime_error("sym_eig: eigendecomposition failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

/// S^{-1/2} for symmetric positive definite S, via eigendecomposition.
/// Throws NotPositiveDefiniteError when the smallest eigenvalue is <= tol.
inline SymMatrix spd_inv_sqrt(const SymMatrix& s, double tol = 1e-10) {
  EigenDecomposition eig = sym_eig(s);
  const double min_eig = eig.values(0);
  if (!(min_eig > tol))
    throw NotPositiveDefiniteError(
        "spd_inv_sqrt: smallest eigenvalue " + std::to_string(min_eig) +
        " is not above tolerance " + std::to_string(tol));
  Vector inv_sqrt = eig.values.array().sqrt().inverse();
  return symmetrize(eig.vectors * inv_sqrt.asDiagonal() * eig.vectors.transpose());
}

/// ||C - I_p||_F, the feasibility violation of a Gram matrix.
inline double feasibility_violation(const SymMatrix& c) {
  return (c.mat() - Matrix::Identity(c.dim(), c.dim())).norm();
}

}  // namespace gstiefel
