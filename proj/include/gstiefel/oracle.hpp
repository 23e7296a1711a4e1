// Sampling interfaces for the stochastic problem: draws of the random
// constraint action M_theta and the random objective gradient grad f_xi,
// the auxiliary maps C_theta / H_xi / W_{xi,theta}, and empirical problems
// built from finite datasets (uniform minibatch draws, one-pass shuffling).
//
// Nothing in this header ever materializes an n-by-n matrix: constraint
// samples act through l-by-n data slabs, so the per-draw footprint is
// O(l n + n p) and trackers stay p-by-p.
#pragma once

#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gstiefel/data_io.hpp"
#include "gstiefel/penalty.hpp"

namespace gstiefel {

/// One draw of the random constraint matrix, as a matrix-free self-adjoint
/// PSD action on n-by-p matrices.
struct ConstraintSample {
  std::function<Matrix(const Matrix&)> apply;
  std::string descriptor;
};

/// One draw of the random objective: a stochastic gradient and, when
/// available, the sampled function value.
struct ObjectiveSample {
  std::function<Matrix(const Matrix&)> grad;
  std::function<double(const Matrix&)> value;  // optional
  std::string descriptor;
};

/// A coupled (theta, xi) draw. Shared-batch problems build both views from
/// one minibatch; independent problems pair independent draws.
struct SamplePair {
  ConstraintSample constraint;
  ObjectiveSample objective;
};

struct ExactPair {
  SmoothObjective objective;
  ConstantConstraint constraint;
};

struct StochasticProblem {
  Index rows = 0;  // n
  Index cols = 0;  // p
  std::function<ConstraintSample(Rng&)> draw_constraint;
  std::function<ObjectiveSample(Rng&)> draw_objective;
  std::function<SamplePair(Rng&)> draw_pair;  // optional coupled draw
  std::optional<ExactPair> exact;             // present for finite/empirical problems
};

inline SamplePair draw_sample_pair(const StochasticProblem& problem, Rng& rng) {
  if (problem.draw_pair) return problem.draw_pair(rng);
  SamplePair pair;
  pair.constraint = problem.draw_constraint(rng);
  pair.objective = problem.draw_objective(rng);
  return pair;
}

/// C_theta(X) = X^T M_theta X (p-by-p, symmetrized).
inline SymMatrix c_theta(const Matrix& x, const ConstraintSample& s) {
  return gram(x, s.apply);
}

/// H_xi(U, V) = f_xi(U(3/2 I - 1/2 V)) + (beta/6) tr(V(V^2 - 3I)).
inline double h_xi_value(const Matrix& u, const SymMatrix& v, const ObjectiveSample& o,
                         const PenaltyParams& params) {
  if (!o.value)
    throw CapabilityError("h_xi_value: objective sample does not provide values");
  detail::require(v.dim() == u.cols(), "h_xi_value: V must be p-by-p");
  const double f = o.value(constraint_dissolving_op(u, v));
  return f + params.beta / 6.0 * detail::penalty_trace_term(v.mat());
}

/// The stochastic direction
///   W_{xi,theta}(X, Y) = G_xi (3/2 I - 1/2 Y) - M_theta X Psi(X^T G_xi)
///                        + beta M_theta X (Y^2 - I),
/// with G_xi = grad f_xi(X(3/2 I - 1/2 Y)). This is the expansion of
/// grad_U H_xi + grad C_theta(X) grad_V H_xi; with Y = X^T M X and exact
/// oracles it coincides with grad h(X) bit-for-bit (shared kernel).
inline Matrix w_direction(const Matrix& x, const SymMatrix& y, const ObjectiveSample& o,
                          const ConstraintSample& s, const PenaltyParams& params) {
  detail::require(y.dim() == x.cols(), "w_direction: Y must be p-by-p");
  return detail::penalty_direction(x, y.mat(), o.grad, s.apply, params.beta);
}

#ifndef NDEBUG
/// Randomized probe of constraint-sample contracts (self-adjointness and
/// positive semidefiniteness). Debug builds only; samples built from data
/// slabs satisfy both by construction.
inline void probe_constraint_sample(const ConstraintSample& s, Index n, Index p, Rng& rng) {
  std::normal_distribution<double> gauss;
  Matrix x1(n, p), x2(n, p);
  for (Index j = 0; j < p; ++j)
    for (Index i = 0; i < n; ++i) {
      x1(i, j) = gauss(rng);
      x2(i, j) = gauss(rng);
    }
  const Matrix mx1 = s.apply(x1);
  const double adj = ((mx1.transpose() * x2) - (x1.transpose() * s.apply(x2))).norm();
  if (adj > 1e-10 * (1.0 + mx1.norm()))
    throw PreconditionError("constraint sample is not self-adjoint");
  if ((x1.transpose() * mx1).trace() < -1e-10 * (1.0 + mx1.norm()))
    throw PreconditionError("constraint sample is not positive semidefinite");
}
#endif

// ---------------------------------------------------------------------------
// Empirical problems over finite datasets.
// ---------------------------------------------------------------------------

/// Immutable dataset shared by all samples of an empirical problem: one
/// matrix per block, rows are samples (all blocks share the sample count).
struct EmpiricalData {
  std::vector<Matrix> blocks;
  Index num_samples = 0;
  Index total_features = 0;
};

inline std::shared_ptr<const EmpiricalData> make_empirical_data(std::vector<Matrix> blocks) {
  if (blocks.empty()) throw std::invalid_argument("empirical data: no blocks given");
  EmpiricalData data;
  data.num_samples = blocks.front().rows();
  if (data.num_samples < 1) throw std::invalid_argument("empirical data: empty dataset");
  for (const Matrix& b : blocks) {
    detail::require(b.rows() == data.num_samples,
                    "empirical data: inconsistent sample counts across blocks");
    data.total_features += b.cols();
  }
  data.blocks = std::move(blocks);
  return std::make_shared<const EmpiricalData>(std::move(data));
}

/// Per-block minibatch slabs (copies of the selected rows, one l-by-n_i
/// matrix per block).
inline std::vector<Matrix> gather_slabs(const EmpiricalData& data,
                                        const std::vector<Index>& batch) {
  std::vector<Matrix> slabs;
  slabs.reserve(data.blocks.size());
  for (const Matrix& block : data.blocks) {
    Matrix slab(static_cast<Index>(batch.size()), block.cols());
    for (Index r = 0; r < slab.rows(); ++r) slab.row(r) = block.row(batch[static_cast<size_t>(r)]);
    slabs.push_back(std::move(slab));
  }
  return slabs;
}

/// Block-diagonal minibatch second-moment action: block i of the output is
/// (1/l) Z_i^T (Z_i X_i). Never forms Z^T Z.
inline ConstraintSample constraint_sample_from_slabs(std::shared_ptr<const std::vector<Matrix>> slabs,
                                                     std::string descriptor) {
  ConstraintSample sample;
  sample.descriptor = std::move(descriptor);
  sample.apply = [slabs](const Matrix& x) {
    Index total = 0;
    for (const Matrix& s : *slabs) total += s.cols();
    detail::require(x.rows() == total, "constraint sample: row count mismatch");
    const double inv_l = 1.0 / static_cast<double>((*slabs)[0].rows());
    Matrix out(total, x.cols());
    Index offset = 0;
    for (const Matrix& s : *slabs) {
      const Index w = s.cols();
      out.middleRows(offset, w).noalias() = inv_l * (s.transpose() * (s * x.middleRows(offset, w)));
      offset += w;
    }
    return out;
  };
  return sample;
}

/// Builds an ObjectiveSample from per-block minibatch slabs. The factory is
/// what makes the objective problem-specific (GCCA provides one; tests
/// provide simple quadratics).
using BatchObjectiveFactory =
    std::function<ObjectiveSample(const std::vector<Matrix>& slabs)>;

// Shared one-pass cursor over BatchIterator passes: each pass is a seeded
// shuffled partition with the final short batch used as-is; when a pass is
// exhausted the next draw starts a fresh pass seeded from the caller-owned
// rng, so multi-epoch runs reshuffle per pass and identical seeds give
// identical streams.
class BatchCursor {
 public:
  BatchCursor(Index n, Index l) : n_(n), l_(l) {
    if (l < 1 || l > n) throw std::invalid_argument("batch cursor: batch size out of range");
  }

  std::vector<Index> next(Rng& rng) {
    if (!pass_ || pass_->done()) pass_.emplace(n_, l_, rng());
    return pass_->next();
  }

  Index batches_per_pass() const { return (n_ + l_ - 1) / l_; }

 private:
  Index n_, l_;
  std::optional<BatchIterator> pass_;
};

struct EmpiricalOptions {
  Index batch_size = 100;
  // One minibatch feeds both the constraint and objective draw (the single
  // data stream of the experiment protocol); when false the two draws
  // advance independent cursors.
  bool shared_batches = true;
};

/// Finite empirical problem: uniform one-pass minibatch draws for both the
/// constraint action and the objective, plus the exact full-data pair.
///
/// The returned problem also exposes the per-sample support through
/// empirical_support_size / constraint_atom / objective_atom free functions
/// below, which tests use for exhaustive unbiasedness averages.
inline StochasticProblem empirical_problem_from_data(std::shared_ptr<const EmpiricalData> data,
                                                     BatchObjectiveFactory objective_factory,
                                                     ExactPair exact,
                                                     const EmpiricalOptions& options) {
  if (!objective_factory)
    throw std::invalid_argument("empirical problem: objective factory required");
  StochasticProblem problem;
  problem.rows = data->total_features;
  problem.cols = 0;  // set by callers that know p; not needed for draws
  problem.exact = std::move(exact);

  auto make_pair = [data, objective_factory](const std::vector<Index>& batch) {
    auto slabs = std::make_shared<const std::vector<Matrix>>(gather_slabs(*data, batch));
    std::string tag = "batch[" + std::to_string(batch.front()) + ".." +
                      std::to_string(batch.back()) + "]#" + std::to_string(batch.size());
    SamplePair pair;
    pair.constraint = constraint_sample_from_slabs(slabs, tag);
    pair.objective = objective_factory(*slabs);
    pair.objective.descriptor = tag;
    return pair;
  };

  auto pair_cursor = std::make_shared<BatchCursor>(data->num_samples, options.batch_size);
  problem.draw_pair = [pair_cursor, make_pair](Rng& rng) { return make_pair(pair_cursor->next(rng)); };

  if (options.shared_batches) {
    // Stand-alone draws share the pair cursor so a lone constraint or
    // objective draw still walks the same one-pass stream.
    problem.draw_constraint = [pair_cursor, make_pair](Rng& rng) {
      return make_pair(pair_cursor->next(rng)).constraint;
    };
    problem.draw_objective = [pair_cursor, make_pair](Rng& rng) {
      return make_pair(pair_cursor->next(rng)).objective;
    };
  } else {
    auto cons_cursor = std::make_shared<BatchCursor>(data->num_samples, options.batch_size);
    auto obj_cursor = std::make_shared<BatchCursor>(data->num_samples, options.batch_size);
    problem.draw_constraint = [cons_cursor, make_pair](Rng& rng) {
      return make_pair(cons_cursor->next(rng)).constraint;
    };
    problem.draw_objective = [obj_cursor, make_pair](Rng& rng) {
      return make_pair(obj_cursor->next(rng)).objective;
    };
    problem.draw_pair = [cons_cursor, obj_cursor, make_pair](Rng& rng) {
      SamplePair pair;
      pair.constraint = make_pair(cons_cursor->next(rng)).constraint;
      pair.objective = make_pair(obj_cursor->next(rng)).objective;
      return pair;
    };
  }
  return problem;
}

/// Single-sample atoms of the finite support, used by exhaustive averaging
/// tests: the uniform average of the atoms reproduces the exact operators.
inline ConstraintSample constraint_atom(const EmpiricalData& data,
                                        const BatchObjectiveFactory&, Index i) {
  auto slabs = std::make_shared<const std::vector<Matrix>>(gather_slabs(data, {i}));
  return constraint_sample_from_slabs(slabs, "atom#" + std::to_string(i));
}

inline ObjectiveSample objective_atom(const EmpiricalData& data,
                                      const BatchObjectiveFactory& factory, Index i) {
  ObjectiveSample sample = factory(gather_slabs(data, {i}));
  sample.descriptor = "atom#" + std::to_string(i);
  return sample;
}

/// Degenerate stochastic problem wrapping exact operators: every draw
/// returns the exact action and gradient, so the tracker stays exact and
/// the stochastic solvers reduce to their deterministic counterparts.
inline StochasticProblem deterministic_problem(const SmoothObjective& obj,
                                               const ConstantConstraint& cons, Index n,
                                               Index p) {
  StochasticProblem problem;
  problem.rows = n;
  problem.cols = p;
  problem.exact = ExactPair{obj, cons};
  problem.draw_constraint = [cons](Rng&) { return ConstraintSample{cons.apply, "exact"}; };
  problem.draw_objective = [obj](Rng&) {
    return ObjectiveSample{obj.gradient, obj.value, "exact"};
  };
  return problem;
}

/// Exact full-data constraint: block-diagonal action through full slabs,
/// with sigma_min/sigma_max from the per-block covariance spectra.
inline ConstantConstraint exact_constraint_from_data(const std::shared_ptr<const EmpiricalData>& data) {
  const double inv_n = 1.0 / static_cast<double>(data->num_samples);
  std::vector<Matrix> covs;
  covs.reserve(data->blocks.size());
  double sigma_min = std::numeric_limits<double>::infinity();
  double sigma_max = 0.0;
  for (const Matrix& block : data->blocks) {
    Matrix cov = inv_n * (block.transpose() * block);
    const Vector eigs = sym_eig(symmetrize(cov)).values;
    sigma_min = std::min(sigma_min, eigs(0));
    sigma_max = std::max(sigma_max, eigs(eigs.size() - 1));
    covs.push_back(symmetrize(cov).mat());
  }
  auto shared = std::make_shared<const std::vector<Matrix>>(std::move(covs));
  ConstantConstraint cons;
  cons.sigma_min = sigma_min;
  cons.sigma_max = sigma_max;
  cons.apply = [shared](const Matrix& x) {
    Index total = 0;
    for (const Matrix& c : *shared) total += c.rows();
    detail::require(x.rows() == total, "exact constraint: row count mismatch");
    Matrix out(total, x.cols());
    Index offset = 0;
    for (const Matrix& c : *shared) {
      out.middleRows(offset, c.rows()).noalias() = c * x.middleRows(offset, c.rows());
      offset += c.rows();
    }
    return out;
  };
  return cons;
}

}  // namespace gstiefel
