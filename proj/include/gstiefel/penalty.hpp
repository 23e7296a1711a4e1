// The constraint dissolving penalty
//
//   h(X) = f(A(X)) + (beta/6) tr( C (C^2 - 3 I_p) ),   C = X^T M X,
//
// with A(X) = X(3/2 I - 1/2 C), together with its gradient, Hessian action,
// and the first-order stationarity diagnostics used throughout the library.
// All functions here are deterministic: the objective and constraint are
// exact (full-expectation) oracles.
#pragma once

#include <functional>
#include <limits>
#include <memory>

#include "gstiefel/dense.hpp"

namespace gstiefel {

struct PenaltyParams {
  double beta = 1.0;

  explicit PenaltyParams(double b) : beta(b) {
    if (!(b > 0)) throw std::domain_error("PenaltyParams: beta must be positive");
  }
};

/// Exact smooth objective f with gradient and (optionally) a Hessian action
/// D -> grad^2 f(X)[D]. Callbacks must be reentrant.
struct SmoothObjective {
  std::function<double(const Matrix&)> value;
  std::function<Matrix(const Matrix&)> gradient;
  std::function<Matrix(const Matrix&, const Matrix&)> hess_vec;  // optional
};

/// Exact constraint matrix M as a self-adjoint positive definite action
/// X -> M X, with its extreme eigenvalues (supplied or estimated).
struct ConstantConstraint {
  std::function<Matrix(const Matrix&)> apply;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
};

struct StationarityReport {
  double grad_h_norm = 0.0;  // ||grad h(X)||_F
  double kkt_norm = 0.0;     // ||grad f(X) - M X Psi(X^T grad f(X))||_F
  double feas = 0.0;         // ||X^T M X - I_p||_F
  bool in_omega = false;     // sigma_max(X^T M X) <= 1
  bool in_omega_r = false;   // ||X^T M X - I_p|| <= 1/6
};

namespace detail {

// Shared kernel: the direction field at (X, V),
//   G_v (3/2 I - 1/2 V) - (M X)(Psi(X^T G_v) - beta (V^2 - I)),
// with G_v = grad(X(3/2 I - 1/2 V)). With V = X^T M X and exact oracles this
// is grad h(X); with a sampled gradient/action and a tracker V it is the
// stochastic direction W. Both callers share this code so that the
// deterministic reduction of the stochastic path is bit-exact.
template <class GradFn, class ApplyFn>
Matrix penalty_direction(const Matrix& x, const Matrix& v, GradFn&& grad_fn,
                         ApplyFn&& apply_fn, double beta) {
  const Index p = x.cols();
  const Matrix identity = Matrix::Identity(p, p);
  const Matrix half_factor = 1.5 * identity - 0.5 * v;
  const Matrix g = grad_fn((x * half_factor).eval());
  require(g.rows() == x.rows() && g.cols() == x.cols(),
          "penalty_direction: gradient shape " + shape_str(g) +
              " does not match iterate " + shape_str(x));
  const Matrix mx = apply_fn(x);
  const Matrix lambda = symmetrize(x.transpose() * g).mat();
  return g * half_factor - mx * (lambda - beta * (v * v - identity));
}

// tr( C (C^2 - 3I) ) = sum_i t_i (t_i^2 - 3) over eigenvalues of C; bounded
// below by -2p whenever C is positive semidefinite.
inline double penalty_trace_term(const Matrix& c) {
  const double term = (c * c * c).trace() - 3.0 * c.trace();
  const double p = static_cast<double>(c.rows());
  if (term < -2.0 * p - 1e-9 * (1.0 + std::abs(term)))
    throw PreconditionError(
        "penalty trace term fell below its PSD lower bound -2p; "
        "the constraint operator is not positive semidefinite");
  return term;
}

}  // namespace detail

/// h(X) = f(A(X)) + (beta/6) tr(C(C^2 - 3I)).
inline double h_value(const Matrix& x, const SmoothObjective& obj,
                      const ConstantConstraint& cons, const PenaltyParams& params) {
  const SymMatrix c = gram(x, cons.apply);
  const double f_at_ax = obj.value(constraint_dissolving_op(x, c));
  return f_at_ax + params.beta / 6.0 * detail::penalty_trace_term(c.mat());
}

/// grad h(X) = G(X)(3/2 I - 1/2 C) - M X Lambda(X) + beta M X (C^2 - I),
/// where G(X) = grad f(A(X)) and Lambda(X) = Psi(X^T G(X)).
inline Matrix h_grad(const Matrix& x, const SmoothObjective& obj,
                     const ConstantConstraint& cons, const PenaltyParams& params) {
  const SymMatrix c = gram(x, cons.apply);
  return detail::penalty_direction(x, c.mat(), obj.gradient, cons.apply, params.beta);
}

/// grad^2 h(X)[D]. Requires obj.hess_vec.
inline Matrix h_hess_vec(const Matrix& x, const Matrix& d, const SmoothObjective& obj,
                         const ConstantConstraint& cons, const PenaltyParams& params) {
  if (!obj.hess_vec)
    throw CapabilityError("h_hess_vec: objective does not provide a Hessian action");
  detail::require(d.rows() == x.rows() && d.cols() == x.cols(),
                  "h_hess_vec: direction shape " + detail::shape_str(d) +
                      " does not match iterate " + detail::shape_str(x));
  const Index p = x.cols();
  const double beta = params.beta;
  const Matrix identity = Matrix::Identity(p, p);
  const Matrix c = gram(x, cons.apply).mat();
  const Matrix half_factor = 1.5 * identity - 0.5 * c;
  const Matrix ax = x * half_factor;
  const Matrix g = obj.gradient(ax);
  const Matrix mx = cons.apply(x);
  const Matrix md = cons.apply(d);
  const Matrix sym_xmd = symmetrize(x.transpose() * md).mat();
  // J_G(X)[D] = grad^2 f(A(X))[ D(3/2 I - 1/2 C) - X Psi(X^T M D) ]
  const Matrix jg = obj.hess_vec(ax, d * half_factor - x * sym_xmd);
  // The last term is Psi(Psi(X^T M D) C): differentiating beta M X (C^2 - I)
  // produces beta M X (dC C + C dC) with dC = 2 Psi(X^T M D). Without the
  // outer symmetrization the bilinear form would not be symmetric and the
  // finite-difference oracle rejects it.
  return jg * half_factor - g * sym_xmd - md * symmetrize(x.transpose() * g).mat() -
         mx * symmetrize(d.transpose() * g).mat() -
         mx * symmetrize(x.transpose() * jg).mat() + beta * md * (c * c - identity) +
         4.0 * beta * mx * symmetrize(sym_xmd * c).mat();
}

/// First-order stationarity diagnostics, all computed from one evaluation of
/// C = X^T M X. The KKT residual field is L(X) = grad f(X) - M X Psi(X^T grad f(X)).
inline StationarityReport kkt_residual(const Matrix& x, const SmoothObjective& obj,
                                       const ConstantConstraint& cons,
                                       const PenaltyParams& params) {
  const SymMatrix c = gram(x, cons.apply);
  const Matrix grad_f = obj.gradient(x);
  const Matrix kkt_field =
      grad_f - cons.apply(x) * symmetrize(x.transpose() * grad_f).mat();

  StationarityReport report;
  report.kkt_norm = kkt_field.norm();
  report.feas = feasibility_violation(c);
  report.grad_h_norm =
      detail::penalty_direction(x, c.mat(), obj.gradient, cons.apply, params.beta).norm();
  const Vector eigs = sym_eig(c).values;
  report.in_omega = eigs(eigs.size() - 1) <= 1.0 + 1e-10;
  report.in_omega_r = report.feas <= 1.0 / 6.0;
  return report;
}

/// Residual of the commuting-Q identity
///   <XQ, grad h(X)> = tr( (beta C (C + I) - 3/2 Lambda(X)) (C - I) Q )
/// for symmetric Q with QC = CQ. A test helper; the precondition is checked.
inline double inner_product_identity_check(const Matrix& x, const SymMatrix& q,
                                           const SmoothObjective& obj,
                                           const ConstantConstraint& cons,
                                           const PenaltyParams& params) {
  const Index p = x.cols();
  const Matrix identity = Matrix::Identity(p, p);
  const Matrix c = gram(x, cons.apply).mat();
  if ((q.mat() * c - c * q.mat()).norm() > 1e-8)
    throw PreconditionError("inner_product_identity_check: Q does not commute with X^T M X");
  const double lhs =
      ((x * q.mat()).transpose() * h_grad(x, obj, cons, params)).trace();
  const Matrix g = obj.gradient(constraint_dissolving_op(x, symmetrize(c)));
  const Matrix lambda = symmetrize(x.transpose() * g).mat();
  const double rhs = ((params.beta * c * (c + identity) - 1.5 * lambda) * (c - identity) *
                      q.mat())
                         .trace();
  return std::abs(lhs - rhs);
}

/// The penalty-weight threshold
///   beta_tilde = 12 kappa(M) (3(p+1) L_g + sigma_min(M)^{1/2} L_0) / sigma_min(M).
/// Above it, stationary points of the penalty classify into manifold
/// stationary points and strict saddles.
inline double beta_threshold(Index p, double l_g, double l_0, double sigma_min_m,
                             double sigma_max_m) {
  if (!(sigma_min_m > 0))
    throw std::domain_error("beta_threshold: sigma_min(M) must be positive");
  if (!(sigma_max_m >= sigma_min_m))
    throw std::domain_error("beta_threshold: sigma_max(M) must be >= sigma_min(M)");
  if (!(p >= 1) || !(l_g > 0) || !(l_0 >= 0))
    throw std::domain_error("beta_threshold: require p >= 1, L_g > 0, L_0 >= 0");
  const double kappa = sigma_max_m / sigma_min_m;
  return 12.0 * kappa *
         (3.0 * static_cast<double>(p + 1) * l_g + std::sqrt(sigma_min_m) * l_0) /
         sigma_min_m;
}

/// f(X) = 1/2 tr(X^T A X) for symmetric A; gradient AX, Hessian action AD.
/// L_g = sigma_max(A) and L_0 = ||grad f(0)|| = 0.
inline SmoothObjective quadratic_objective(const Matrix& a) {
  detail::require(a.rows() == a.cols(), "quadratic_objective: A must be square");
  auto a_sym = std::make_shared<const Matrix>(symmetrize(a).mat());
  SmoothObjective obj;
  obj.value = [a_sym](const Matrix& x) { return 0.5 * (x.transpose() * (*a_sym) * x).trace(); };
  obj.gradient = [a_sym](const Matrix& x) { return Matrix((*a_sym) * x); };
  obj.hess_vec = [a_sym](const Matrix&, const Matrix& d) { return Matrix((*a_sym) * d); };
  return obj;
}

/// Wraps a dense SPD matrix as a ConstantConstraint, filling sigma_min/max
/// from its eigenvalues.
inline ConstantConstraint constraint_from_matrix(const Matrix& m) {
  auto shared = std::make_shared<const Matrix>(symmetrize(m).mat());
  const Vector eigs = sym_eig(symmetrize(*shared)).values;
  ConstantConstraint cons;
  cons.apply = [shared](const Matrix& x) { return Matrix((*shared) * x); };
  cons.sigma_min = eigs(0);
  cons.sigma_max = eigs(eigs.size() - 1);
  return cons;
}

}  // namespace gstiefel
