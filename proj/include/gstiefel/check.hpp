// Self-verification suites behind the `check` subcommand: finite-difference
// oracles for the penalty gradient and Hessian, the manifold and
// commuting-Q identities, exhaustive unbiasedness of the stochastic
// direction, the strict-saddle certificate, and tracker exactness. The
// finite-difference and eigensolver oracles here evaluate only function
// values (or gradients, for Hessian checks), so they are independent of the
// closed forms they test.
#pragma once

#include <random>

#include "gstiefel/gcca.hpp"
#include "gstiefel/optimizer.hpp"

namespace gstiefel::check {

inline Matrix random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> gauss;
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = scale * gauss(rng);
  return m;
}

inline Matrix random_orthogonal(Index n, Rng& rng) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(n, n, rng));
  Matrix q = qr.householderQ();
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  return q;
}

inline Matrix random_spd(Index n, Rng& rng, double lo, double hi) {
  Matrix q = random_orthogonal(n, rng);
  std::uniform_real_distribution<double> unif(lo, hi);
  Vector eigs(n);
  for (Index i = 0; i < n; ++i) eigs(i) = unif(rng);
  return q * eigs.asDiagonal() * q.transpose();
}

inline Matrix m_orthonormalize(const Matrix& x, const Matrix& m) {
  SymMatrix c = symmetrize(x.transpose() * m * x);
  return x * spd_inv_sqrt(c).mat();
}

template <class F>
Matrix fd_gradient(F&& f, const Matrix& x, double step = 1e-5) {
  Matrix g(x.rows(), x.cols());
  Matrix xp = x;
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) {
      const double orig = xp(i, j);
      xp(i, j) = orig + step;
      const double fp = f(xp);
      xp(i, j) = orig - step;
      const double fm = f(xp);
      xp(i, j) = orig;
      g(i, j) = (fp - fm) / (2.0 * step);
    }
  }
  return g;
}

template <class G>
Matrix fd_directional(G&& g, const Matrix& x, const Matrix& d, double step = 1e-5) {
  return ((g((x + step * d).eval()) - g((x - step * d).eval())) / (2.0 * step)).eval();
}

inline double rel_error(const Matrix& approx, const Matrix& exact) {
  return (approx - exact).norm() / std::max(1.0, exact.norm());
}

/// Smallest eigenvalue of a symmetric linear operator on n-by-p matrices,
/// via two-phase power iteration (dominant magnitude first, then the
/// shifted operator). Accuracy is governed by the iteration budget; the
/// spectra this is used on have O(beta) gaps, so a few thousand iterations
/// give far better than 1e-4.
template <class Op>
double smallest_operator_eigenvalue(Op&& op, Index rows, Index cols, Rng& rng,
                                    int iterations = 3000) {
  auto rayleigh = [&](auto&& apply, const Matrix& v) {
    return (v.array() * apply(v).array()).sum();
  };
  Matrix v = random_matrix(rows, cols, rng);
  v /= v.norm();
  double dominant = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Matrix w = op(v);
    const double norm = w.norm();
    if (norm == 0.0) break;
    v = w / norm;
    dominant = rayleigh(op, v);
  }
  const double shift = std::abs(dominant) * 1.5 + 1.0;
  auto shifted = [&](const Matrix& z) { return (shift * z - op(z)).eval(); };
  Matrix u = random_matrix(rows, cols, rng);
  u /= u.norm();
  double top = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Matrix w = shifted(u);
    const double norm = w.norm();
    if (norm == 0.0) break;
    u = w / norm;
    top = rayleigh(shifted, u);
  }
  return shift - top;
}

struct SuiteResult {
  std::string name;
  bool passed = false;
  double max_residual = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct CheckOptions {
  std::uint64_t seed = 20240915;
  // Fault injection: flips the sign of the penalty-gradient term inside the
  // FD suite, which must make that suite fail (a sensitivity check for the
  // oracle itself).
  bool mutate_penalty_sign = false;
};

namespace detail_check {

struct Instance {
  SmoothObjective obj;
  ConstantConstraint cons;
  Matrix x;
};

inline SmoothObjective sine_objective(const Matrix& a, double c) {
  auto a_shared = std::make_shared<const Matrix>(symmetrize(a).mat());
  SmoothObjective obj;
  obj.value = [a_shared, c](const Matrix& x) {
    return 0.5 * (x.transpose() * (*a_shared) * x).trace() + c * x.array().sin().sum();
  };
  obj.gradient = [a_shared, c](const Matrix& x) {
    return Matrix((*a_shared) * x + c * x.array().cos().matrix());
  };
  obj.hess_vec = [a_shared, c](const Matrix& x, const Matrix& d) {
    return Matrix((*a_shared) * d - c * (x.array().sin() * d.array()).matrix());
  };
  return obj;
}

inline Instance random_instance(Rng& rng, Index n, Index p, bool quadratic) {
  Instance inst;
  Matrix a = random_spd(n, rng, -1.0, 1.0);
  inst.obj = quadratic ? quadratic_objective(a) : sine_objective(a, 0.4);
  inst.cons = constraint_from_matrix(random_spd(n, rng, 0.5, 2.0));
  inst.x = random_matrix(n, p, rng, 0.7);
  return inst;
}

}  // namespace detail_check

/// Gradient of the penalty vs central differences of its value: 100 random
/// instances (n <= 8, p <= 3, random SPD M, quadratic and non-quadratic
/// smooth objectives), relative error below 1e-6.
inline SuiteResult fd_gradient_suite(const CheckOptions& options = {}) {
  Rng rng(options.seed);
  const PenaltyParams params(2.5);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 3 + static_cast<Index>(rng() % 6);
    const Index p = 1 + static_cast<Index>(rng() % 3);
    detail_check::Instance inst = detail_check::random_instance(rng, n, p, trial % 2 == 0);
    auto h = [&](const Matrix& z) { return h_value(z, inst.obj, inst.cons, params); };
    Matrix fd = fd_gradient(h, inst.x, 1e-5);
    Matrix grad = h_grad(inst.x, inst.obj, inst.cons, params);
    if (options.mutate_penalty_sign) {
      const Matrix c = gram(inst.x, inst.cons.apply).mat();
      const Matrix identity = Matrix::Identity(p, p);
      grad -= 2.0 * params.beta * inst.cons.apply(inst.x) * (c * c - identity);
    }
    worst = std::max(worst, rel_error(fd, grad));
  }
  return {"fd-grad", worst < 1e-6, worst, 1e-6, "100 instances, n<=8, p<=3"};
}

/// Hessian action vs central differences of the gradient on 50 quadratic
/// instances, plus symmetry probes of the bilinear form.
inline SuiteResult fd_hessian_suite(const CheckOptions& options = {}) {
  Rng rng(options.seed + 1);
  const PenaltyParams params(2.0);
  double worst_fd = 0.0;
  double worst_sym = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 4 + static_cast<Index>(rng() % 4);
    const Index p = 1 + static_cast<Index>(rng() % 3);
    detail_check::Instance inst = detail_check::random_instance(rng, n, p, true);
    Matrix d = random_matrix(n, p, rng);
    auto grad = [&](const Matrix& z) { return h_grad(z, inst.obj, inst.cons, params); };
    Matrix fd = fd_directional(grad, inst.x, d, 1e-5);
    Matrix hv = h_hess_vec(inst.x, d, inst.obj, inst.cons, params);
    worst_fd = std::max(worst_fd, rel_error(fd, hv));

    Matrix d2 = random_matrix(n, p, rng);
    const double lhs =
        (d.transpose() * h_hess_vec(inst.x, d2, inst.obj, inst.cons, params)).trace();
    const double rhs =
        (d2.transpose() * h_hess_vec(inst.x, d, inst.obj, inst.cons, params)).trace();
    worst_sym = std::max(worst_sym, std::abs(lhs - rhs) / (1.0 + std::abs(lhs)));
  }
  const bool passed = worst_fd < 1e-5 && worst_sym < 1e-8;
  return {"fd-hess", passed, std::max(worst_fd, worst_sym * 1e3), 1e-5,
          "50 quadratic instances + symmetry probes"};
}

/// On the manifold the penalty gradient equals the KKT field exactly:
/// 50 M-orthonormalized points, residual below 1e-12 (1 + ||L||).
inline SuiteResult manifold_identity_suite(const CheckOptions& options = {}) {
  Rng rng(options.seed + 2);
  const PenaltyParams params(2.5);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 6 + static_cast<Index>(rng() % 6);
    const Index p = 1 + static_cast<Index>(rng() % 3);
    Matrix m = random_spd(n, rng, 0.5, 2.0);
    detail_check::Instance inst;
    inst.obj = trial % 2 == 0
                   ? quadratic_objective(random_spd(n, rng, -1.0, 1.0))
                   : detail_check::sine_objective(random_spd(n, rng, -1.0, 1.0), 0.3);
    inst.cons = constraint_from_matrix(m);
    Matrix x = m_orthonormalize(m_orthonormalize(random_matrix(n, p, rng), m), m);
    Matrix grad_f = inst.obj.gradient(x);
    Matrix kkt_field = grad_f - inst.cons.apply(x) * symmetrize(x.transpose() * grad_f).mat();
    Matrix gh = h_grad(x, inst.obj, inst.cons, params);
    worst = std::max(worst, (gh - kkt_field).norm() / (1.0 + kkt_field.norm()));
  }
  return {"manifold-identity", worst < 1e-12, worst, 1e-12, "50 M-orthonormalized points"};
}

/// Commuting-Q inner-product identity for Q in {I, C, C^2 - C} on 50
/// instances, residual below 1e-9.
inline SuiteResult commuting_q_suite(const CheckOptions& options = {}) {
  Rng rng(options.seed + 3);
  const PenaltyParams params(1.5);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 5 + static_cast<Index>(rng() % 4);
    const Index p = 1 + static_cast<Index>(rng() % 3);
    detail_check::Instance inst = detail_check::random_instance(rng, n, p, trial % 2 == 0);
    inst.x *= 0.5;
    SymMatrix c = gram(inst.x, inst.cons.apply);
    SymMatrix c2_minus_c = symmetrize(c.mat() * c.mat() - c.mat());
    for (const SymMatrix& q : {SymMatrix::Identity(p), c, c2_minus_c}) {
      worst = std::max(worst,
                       inner_product_identity_check(inst.x, q, inst.obj, inst.cons, params));
    }
  }
  return {"commuting-q", worst < 1e-9, worst, 1e-9, "Q in {I, C, C^2-C}, 50 instances"};
}

/// Exhaustive average of the stochastic direction over every (xi, theta)
/// atom pair of a finite empirical problem, at Y = C(X), against the exact
/// penalty gradient: 20 random points, relative error below 1e-10.
inline SuiteResult unbiasedness_suite(const CheckOptions& options = {}) {
  Rng rng(options.seed + 4);
  const Index samples = 120, n1 = 4, n2 = 3;
  const Index n = n1 + n2;
  auto data = make_empirical_data(
      {random_matrix(samples, n1, rng), random_matrix(samples, n2, rng)});
  GccaProblem problem;
  problem.blocks = BlockSpec{{n1, n2}};
  problem.weights = uniform_weights(2);
  problem.merit = Merit{Merit::Kind::kIdentity, 1.0};
  problem.p = 2;
  BatchObjectiveFactory factory = gcca_objective_factory(problem);
  SmoothObjective exact_obj = exact_gcca_objective(data, problem);
  ConstantConstraint exact_cons = exact_constraint_from_data(data);
  const PenaltyParams params(0.7);

  std::vector<ConstraintSample> cons_atoms;
  std::vector<ObjectiveSample> obj_atoms;
  for (Index i = 0; i < samples; ++i) {
    cons_atoms.push_back(constraint_atom(*data, factory, i));
    obj_atoms.push_back(objective_atom(*data, factory, i));
  }

  double worst = 0.0;
  for (int probe = 0; probe < 20; ++probe) {
    Matrix x = random_matrix(n, 2, rng, 0.6);
    SymMatrix y = gram(x, exact_cons.apply);
    Matrix mean = Matrix::Zero(n, 2);
    for (Index i = 0; i < samples; ++i)
      for (Index j = 0; j < samples; ++j)
        mean += w_direction(x, y, obj_atoms[static_cast<size_t>(j)],
                            cons_atoms[static_cast<size_t>(i)], params);
    mean /= static_cast<double>(samples) * static_cast<double>(samples);
    Matrix exact = h_grad(x, exact_obj, exact_cons, params);
    worst = std::max(worst, (mean - exact).norm() / (1e-30 + exact.norm()));
  }
  return {"unbiasedness", worst < 1e-10, worst, 1e-10,
          "exhaustive over 120^2 atom pairs, 20 points"};
}

/// Strict-saddle certificate at the origin: quadratic objective with
/// grad f(0) = 0 and beta >= beta_tilde; the smallest eigenvalue of the
/// penalty Hessian at 0 (power iteration through h_hess_vec) must be at
/// most -beta sigma_min(M)/4 + 1e-3.
inline SuiteResult saddle_suite(const CheckOptions& options = {}) {
  Rng rng(options.seed + 5);
  const Index n = 8, p = 2;
  Matrix a = random_spd(n, rng, -1.0, 1.0);
  Matrix m = random_spd(n, rng, 0.6, 1.8);
  SmoothObjective obj = quadratic_objective(a);
  ConstantConstraint cons = constraint_from_matrix(m);
  const double l_g = sym_eig(symmetrize(a)).values.cwiseAbs().maxCoeff();
  const double beta = beta_threshold(p, l_g, 0.0, cons.sigma_min, cons.sigma_max);
  const PenaltyParams params(beta);
  const Matrix origin = Matrix::Zero(n, p);
  auto hess_at_origin = [&](const Matrix& d) {
    return h_hess_vec(origin, d, obj, cons, params);
  };
  const double lambda_min = smallest_operator_eigenvalue(hess_at_origin, n, p, rng);
  const double bound = -beta * cons.sigma_min / 4.0 + 1e-3;
  return {"saddle", lambda_min <= bound, lambda_min, bound,
          "power iteration on the penalty Hessian at the origin"};
}

/// Tracker exactness: the b = 1 collapse is bit-exact and deterministic
/// oracles keep Y_k = C(X_k) for 50 steps.
inline SuiteResult tracker_suite(const CheckOptions& options = {}) {
  Rng rng(options.seed + 6);
  const Index n = 7, p = 3;
  Matrix m = random_spd(n, rng, 0.5, 2.0);
  ConstantConstraint cons = constraint_from_matrix(m);
  ConstraintSample s{cons.apply, "exact"};

  Matrix x_old = random_matrix(n, p, rng);
  Matrix x_new = random_matrix(n, p, rng);
  SymMatrix y0 = symmetrize(random_spd(p, rng, 0.1, 2.0));
  double worst = (tracker_update(y0, x_old, x_new, s, 1.0).mat() - c_theta(x_new, s).mat())
                     .cwiseAbs()
                     .maxCoeff();

  Matrix x = random_matrix(n, p, rng);
  SymMatrix y = gram(x, cons.apply);
  for (int k = 0; k < 50; ++k) {
    Matrix x_next = x - 0.05 * random_matrix(n, p, rng);
    y = tracker_update(y, x, x_next, s, 0.25);
    x = std::move(x_next);
    worst = std::max(worst, (y.mat() - gram(x, cons.apply).mat()).norm());
  }
  return {"tracker", worst < 1e-12, worst, 1e-12, "b=1 collapse + 50-step induction"};
}

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {
      "fd-grad",   "fd-hess", "manifold-identity", "commuting-q",
      "unbiasedness", "saddle", "tracker"};
  return names;
}

/// Runs the named suites (all when the filter is empty). Unknown names
/// throw std::invalid_argument.
inline std::vector<SuiteResult> run_suites(const std::vector<std::string>& filter,
                                           const CheckOptions& options = {}) {
  auto selected = [&](const std::string& name) {
    if (filter.empty()) return true;
    return std::find(filter.begin(), filter.end(), name) != filter.end();
  };
  for (const std::string& f : filter)
    if (std::find(suite_names().begin(), suite_names().end(), f) == suite_names().end())
      throw std::invalid_argument("unknown suite '" + f + "'");

  std::vector<SuiteResult> results;
  if (selected("fd-grad")) results.push_back(fd_gradient_suite(options));
  if (selected("fd-hess")) results.push_back(fd_hessian_suite(options));
  if (selected("manifold-identity")) results.push_back(manifold_identity_suite(options));
  if (selected("commuting-q")) results.push_back(commuting_q_suite(options));
  if (selected("unbiasedness")) results.push_back(unbiasedness_suite(options));
  if (selected("saddle")) results.push_back(saddle_suite(options));
  if (selected("tracker")) results.push_back(tracker_suite(options));
  return results;
}

}  // namespace gstiefel::check
