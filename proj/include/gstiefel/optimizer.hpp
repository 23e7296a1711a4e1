// The stochastic solvers: the tracking recursion for Y_k ~ C(X_k), the
// plain stochastic gradient method (X-step, tracker update, W-direction),
// its AMSGrad-style adaptive variant, the tracker-based post-processing
// X Y^{-1/2}, and a full-batch gradient-descent baseline on the penalty.
#pragma once

#include <chrono>
#include <optional>
#include <cstdint>
#include <limits>

#include "gstiefel/oracle.hpp"

namespace gstiefel {

/// Step sizes alpha_k = s1 * b_k. In constant mode alpha_k = s2 for the
/// whole run; in theory mode alpha_k = s2 / sqrt(K). s2 = 0 freezes the
/// iterate (alpha = 0), which is only useful together with tracker_override
/// to watch the pure Y-tracking recursion.
struct StepSchedule {
  enum class Mode { kConstant, kTheory };

  double s1 = 0.5;
  double s2 = 0.1;
  Index iterations = 0;
  Mode mode = Mode::kConstant;
  std::optional<double> tracker_override;  // fixes b_k independently of alpha

  StepSchedule(double s1_in, double s2_in, Index k, Mode m = Mode::kConstant,
               std::optional<double> b_override = std::nullopt)
      : s1(s1_in), s2(s2_in), iterations(k), mode(m), tracker_override(b_override) {
    if (!(s1 > 0.0 && s1 <= 2.0))
      throw std::domain_error("StepSchedule: require 0 < s1 <= 2");
    if (!(s2 >= 0.0)) throw std::domain_error("StepSchedule: require s2 >= 0");
    if (k < 0) throw std::domain_error("StepSchedule: require K >= 0");
    if (tracker_override && !(*tracker_override >= 0.0 && *tracker_override <= 1.0))
      throw std::domain_error("StepSchedule: tracker override must lie in [0, 1]");
  }

  double alpha(Index) const {
    return mode == Mode::kConstant ? s2 : s2 / std::sqrt(static_cast<double>(iterations));
  }
  // b = alpha/s1, capped at the collapse step b = 1 (grid corners with
  // s2 > s1 would otherwise leave the tracker's domain).
  double tracker_step(Index k) const {
    return tracker_override ? *tracker_override : std::min(1.0, alpha(k) / s1);
  }
};

struct AdaParams {
  double eta1 = 0.9;
  double eta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(eta1 >= 0.0 && eta1 < 1.0))
      throw std::domain_error("AdaParams: require 0 <= eta1 < 1");
    if (!(eta2 < 1.0 && eta1 * eta1 < eta2))
      throw std::domain_error("AdaParams: require eta1^2 < eta2 < 1");
    if (!(eps > 0.0)) throw std::domain_error("AdaParams: require eps > 0");
  }
};

struct CdfsgState {
  Matrix x;
  SymMatrix y;
  Matrix d;
  Index k = 0;
};

struct AdaState {
  Matrix x;
  SymMatrix y;
  Matrix d;
  Matrix b;     // first moment
  Matrix v;     // second moment
  Matrix vhat;  // running elementwise max of v
  Index k = 0;
};

/// One metrics row; unavailable entries are NaN and print as blanks.
struct RunMetricsRow {
  Index iter = 0;
  double wall_s = 0.0;
  double fval = std::numeric_limits<double>::quiet_NaN();
  double feas_est = std::numeric_limits<double>::quiet_NaN();  // ||Y - I||
  double dnorm = std::numeric_limits<double>::quiet_NaN();
  double grad_h = std::numeric_limits<double>::quiet_NaN();  // exact, at cadence
  double kkt = std::numeric_limits<double>::quiet_NaN();     // exact, at cadence
  double pcc = std::numeric_limits<double>::quiet_NaN();     // optional, at cadence
};

struct RunRecord {
  std::vector<RunMetricsRow> rows;  // K + 1 rows including the initial state
  double total_wall_s = 0.0;
};

enum class RunStatus { kOk, kAbortedNonFinite, kAbortedDiverged };

struct RunResult {
  Matrix x;
  SymMatrix y;
  RunRecord record;
  RunStatus status = RunStatus::kOk;
  std::string message;
};

/// Snapshot handed to the per-iteration hook. The moment fields are null
/// for solvers that do not maintain them.
struct IterateView {
  const Matrix& x;
  const SymMatrix& y;
  const Matrix& d;
  const Matrix* b = nullptr;
  const Matrix* vhat = nullptr;
};

struct RunHooks {
  std::function<void(Index, const IterateView&, const RunMetricsRow&)> on_iteration;
  std::function<double(const Matrix&)> pcc_metric;  // evaluated at cadence rows
  Index exact_metric_cadence = 0;                   // 0 -> ceil(K/100)
};

inline constexpr double kDivergenceBound = 1e12;

/// Tracking recursion Y_{k+1} = Y_k - b(Y_k - C_theta(X_k))
///                            + (C_theta(X_{k+1}) - C_theta(X_k)),
/// evaluated as (1-b)(Y_k - C_theta(X_k)) + C_theta(X_{k+1}) so that the
/// b = 1 collapse is exact and deterministic oracles keep Y_k = C(X_k)
/// bit-for-bit. Result is symmetrized.
inline SymMatrix tracker_update(const SymMatrix& y, const Matrix& x_old,
                                const Matrix& x_new, const ConstraintSample& s, double b) {
  if (!(b >= 0.0 && b <= 1.0))
    throw std::domain_error("tracker_update: tracking step b must lie in [0, 1]");
  detail::require(x_old.rows() == x_new.rows() && x_old.cols() == x_new.cols(),
                  "tracker_update: iterate shapes differ");
  detail::require(y.dim() == x_old.cols(), "tracker_update: tracker must be p-by-p");
  const Matrix c_old = c_theta(x_old, s).mat();
  const Matrix c_new = c_theta(x_new, s).mat();
  return symmetrize((1.0 - b) * (y.mat() - c_old) + c_new);
}

/// X Y^{-1/2}: tracker-based approximate M-orthonormalization applied after
/// the final iterate. Throws NotPositiveDefiniteError when Y is not SPD.
inline Matrix postprocess(const Matrix& x, const SymMatrix& y) {
  detail::require(y.dim() == x.cols(), "postprocess: Y must be p-by-p");
  return x * spd_inv_sqrt(y, 1e-10).mat();
}

namespace detail {

inline Index metric_cadence(Index total_iterations, Index requested) {
  if (requested > 0) return requested;
  return std::max<Index>(1, (total_iterations + 99) / 100);
}

class WallClock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Fills the estimate columns and, at cadence rows, the exact diagnostics.
inline RunMetricsRow make_metrics_row(Index k, Index total, const WallClock& clock,
                                      const Matrix& x, const SymMatrix& y, const Matrix& d,
                                      double fval_estimate, const StochasticProblem& problem,
                                      const PenaltyParams& params, const RunHooks& hooks) {
  RunMetricsRow row;
  row.iter = k;
  row.wall_s = clock.seconds();
  row.fval = fval_estimate;
  row.feas_est = feasibility_violation(y);
  row.dnorm = d.norm();
  const Index cadence = metric_cadence(total, hooks.exact_metric_cadence);
  const bool cadence_row = (k % cadence == 0) || k == total;
  if (cadence_row && problem.exact) {
    StationarityReport report =
        kkt_residual(x, problem.exact->objective, problem.exact->constraint, params);
    row.grad_h = report.grad_h_norm;
    row.kkt = report.kkt_norm;
  }
  if (cadence_row && hooks.pcc_metric) row.pcc = hooks.pcc_metric(x);
  return row;
}

// NaN/divergence guard shared by all solvers.
inline bool check_iterate(const Matrix& x, const SymMatrix& y, const Matrix& d,
                          double fval_estimate, Index k, RunResult& result) {
  if (!x.allFinite() || !y.mat().allFinite() || !d.allFinite()) {
    result.status = RunStatus::kAbortedNonFinite;
    result.message = "non-finite iterate at iteration " + std::to_string(k);
    return false;
  }
  if (std::isfinite(fval_estimate) && std::abs(fval_estimate) > kDivergenceBound) {
    result.status = RunStatus::kAbortedDiverged;
    result.message = "objective estimate exceeded " + std::to_string(kDivergenceBound) +
                     " at iteration " + std::to_string(k);
    return false;
  }
  return true;
}

}  // namespace detail

/// Algorithm: X_{k+1} = X_k - alpha_k D_k; draw theta, update the tracker;
/// draw xi, D_{k+1} = W_{xi,theta}(X_{k+1}, Y_{k+1}). D_0 = 0, so the first
/// X-step is a no-op. Y_0 is C(X_0) under the exact operator when the
/// problem exposes one, else a single constraint draw.
inline RunResult cdfsg_run(const StochasticProblem& problem, const Matrix& x0,
                           const StepSchedule& sched, const PenaltyParams& params,
                           std::uint64_t seed, const RunHooks& hooks = {}) {
  detail::require(x0.allFinite(), "cdfsg_run: X0 must be finite");
  const Index total = sched.iterations;
  detail::WallClock clock;
  Rng rng(seed);

  RunResult result;
  result.x = x0;
  Matrix d = Matrix::Zero(x0.rows(), x0.cols());

  double fval = std::numeric_limits<double>::quiet_NaN();
  if (problem.exact) {
    result.y = gram(result.x, problem.exact->constraint.apply);
    if (problem.exact->objective.value) fval = problem.exact->objective.value(result.x);
  } else {
    SamplePair pair0 = draw_sample_pair(problem, rng);
    result.y = c_theta(result.x, pair0.constraint);
    if (pair0.objective.value) fval = pair0.objective.value(result.x);
  }

  auto emit = [&](Index k) {
    RunMetricsRow row = detail::make_metrics_row(k, total, clock, result.x, result.y,
                                                 d, fval, problem, params, hooks);
    result.record.rows.push_back(row);
    if (hooks.on_iteration)
      hooks.on_iteration(k, IterateView{result.x, result.y, d}, row);
  };
  emit(0);

  for (Index k = 0; k < total; ++k) {
    Matrix x_next = result.x - sched.alpha(k) * d;
    SamplePair pair = draw_sample_pair(problem, rng);
    SymMatrix y_next =
        tracker_update(result.y, result.x, x_next, pair.constraint, sched.tracker_step(k));
    d = w_direction(x_next, y_next, pair.objective, pair.constraint, params);
    result.x = std::move(x_next);
    result.y = std::move(y_next);
    if (pair.objective.value) fval = pair.objective.value(result.x);
    if (!detail::check_iterate(result.x, result.y, d, fval, k + 1, result)) break;
    emit(k + 1);
  }
  result.record.total_wall_s = clock.seconds();
  return result;
}

/// Adaptive variant: the X-step is preconditioned elementwise by
/// (eps + Vhat)^{-1/2} applied to the first moment B; V and Vhat follow the
/// max-update, which makes Vhat nondecreasing. Moment recursions:
///   B <- eta1 B + (1-eta1) D,   V <- eta2 Vhat + (1-eta2) D^2,
///   Vhat <- max(V, Vhat).
/// Two invariants are enforced every iteration: elementwise monotonicity of
/// Vhat and the step-displacement bound
///   ||X_{k+1} - X_k||^2 <= alpha_k^2 n p (1-eta2)^{-1} (1-gamma)^{-1},
/// gamma = eta1^2/eta2.
inline RunResult cdfsg_ada_run(const StochasticProblem& problem, const Matrix& x0,
                               const StepSchedule& sched, const PenaltyParams& params,
                               const AdaParams& ada, std::uint64_t seed,
                               const RunHooks& hooks = {}) {
  ada.validate();
  detail::require(x0.allFinite(), "cdfsg_ada_run: X0 must be finite");
  const Index total = sched.iterations;
  const double np = static_cast<double>(x0.rows()) * static_cast<double>(x0.cols());
  const double gamma = ada.eta1 * ada.eta1 / ada.eta2;
  const double displacement_factor = np / ((1.0 - ada.eta2) * (1.0 - gamma));
  detail::WallClock clock;
  Rng rng(seed);

  RunResult result;
  result.x = x0;
  Matrix d = Matrix::Zero(x0.rows(), x0.cols());
  Matrix b = Matrix::Zero(x0.rows(), x0.cols());
  Matrix v = Matrix::Zero(x0.rows(), x0.cols());
  Matrix vhat = Matrix::Zero(x0.rows(), x0.cols());

  double fval = std::numeric_limits<double>::quiet_NaN();
  if (problem.exact) {
    result.y = gram(result.x, problem.exact->constraint.apply);
    if (problem.exact->objective.value) fval = problem.exact->objective.value(result.x);
  } else {
    SamplePair pair0 = draw_sample_pair(problem, rng);
    result.y = c_theta(result.x, pair0.constraint);
    if (pair0.objective.value) fval = pair0.objective.value(result.x);
  }

  auto emit = [&](Index k) {
    RunMetricsRow row = detail::make_metrics_row(k, total, clock, result.x, result.y,
                                                 d, fval, problem, params, hooks);
    result.record.rows.push_back(row);
    if (hooks.on_iteration)
      hooks.on_iteration(k, IterateView{result.x, result.y, d, &b, &vhat}, row);
  };
  emit(0);

  for (Index k = 0; k < total; ++k) {
    const double alpha = sched.alpha(k);
    Matrix x_next =
        result.x - alpha * ((vhat.array() + ada.eps).rsqrt() * b.array()).matrix();
    const double displacement = (x_next - result.x).squaredNorm();
    if (displacement > alpha * alpha * displacement_factor * (1.0 + 1e-12))
      throw std::logic_error("cdfsg_ada_run: step-displacement bound violated");

    SamplePair pair = draw_sample_pair(problem, rng);
    SymMatrix y_next =
        tracker_update(result.y, result.x, x_next, pair.constraint, sched.tracker_step(k));
    d = w_direction(x_next, y_next, pair.objective, pair.constraint, params);

    b = ada.eta1 * b + (1.0 - ada.eta1) * d;
    v = ada.eta2 * vhat + (1.0 - ada.eta2) * d.array().square().matrix();
    Matrix vhat_next = v.cwiseMax(vhat);
    if (((vhat_next - vhat).array() < 0.0).any())
      throw std::logic_error("cdfsg_ada_run: Vhat monotonicity violated");
    vhat = std::move(vhat_next);

    result.x = std::move(x_next);
    result.y = std::move(y_next);
    if (pair.objective.value) fval = pair.objective.value(result.x);
    if (!detail::check_iterate(result.x, result.y, d, fval, k + 1, result)) break;
    emit(k + 1);
  }
  result.record.total_wall_s = clock.seconds();
  return result;
}

/// Exact-gradient baseline X_{k+1} = X_k - step * grad h(X_k); the trace
/// carries exact diagnostics every iteration.
inline RunResult deterministic_gd_run(const SmoothObjective& obj,
                                      const ConstantConstraint& cons, const Matrix& x0,
                                      double step, Index iterations,
                                      const PenaltyParams& params,
                                      const RunHooks& hooks = {}) {
  if (!(step > 0.0)) throw std::domain_error("deterministic_gd_run: step must be positive");
  detail::require(x0.allFinite(), "deterministic_gd_run: X0 must be finite");
  detail::WallClock clock;

  RunResult result;
  result.x = x0;
  result.y = gram(x0, cons.apply);
  Matrix d = Matrix::Zero(x0.rows(), x0.cols());

  auto emit = [&](Index k) {
    RunMetricsRow row;
    row.iter = k;
    row.wall_s = clock.seconds();
    row.fval = obj.value ? obj.value(result.x) : std::numeric_limits<double>::quiet_NaN();
    StationarityReport report = kkt_residual(result.x, obj, cons, params);
    row.feas_est = report.feas;
    row.dnorm = d.norm();
    row.grad_h = report.grad_h_norm;
    row.kkt = report.kkt_norm;
    if (hooks.pcc_metric) row.pcc = hooks.pcc_metric(result.x);
    result.record.rows.push_back(row);
    if (hooks.on_iteration)
      hooks.on_iteration(k, IterateView{result.x, result.y, d}, row);
    return row;
  };
  RunMetricsRow row = emit(0);

  for (Index k = 0; k < iterations; ++k) {
    d = h_grad(result.x, obj, cons, params);
    result.x = result.x - step * d;
    if (!detail::check_iterate(result.x, result.y, d, row.fval, k + 1, result)) break;
    result.y = gram(result.x, cons.apply);
    row = emit(k + 1);
    if (!std::isfinite(row.fval) && obj.value) {
      result.status = RunStatus::kAbortedNonFinite;
      result.message = "non-finite objective at iteration " + std::to_string(k + 1);
      break;
    }
  }
  result.record.total_wall_s = clock.seconds();
  return result;
}

}  // namespace gstiefel
