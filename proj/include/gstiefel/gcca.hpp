// GCCA/CCA problem construction: merit functions, the multi-view
// correlation objective over minibatch slabs, full-batch ground-truth
// solvers (whitened SVD), the PCC/TCC accuracy metrics, and the synthetic
// planted-correlation generator used by the verification harness.
#pragma once

#include <memory>

#include "gstiefel/oracle.hpp"

namespace gstiefel {

struct Merit {
  enum class Kind { kIdentity, kHuber };
  Kind kind = Kind::kIdentity;
  double mu = 1.0;  // Huber threshold, used iff kind == kHuber

  void validate() const {
    if (kind == Kind::kHuber && !(mu > 0.0))
      throw std::domain_error("Merit: Huber threshold mu must be positive");
  }
};

/// g(t) and g'(t). Identity: (t, 1). Huber: quadratic inside |t| <= mu,
/// linear with slope mu*sign(t) outside; value and slope are continuous at
/// the threshold.
inline std::pair<double, double> merit_value_and_slope(double t, const Merit& merit) {
  if (merit.kind == Merit::Kind::kIdentity) return {t, 1.0};
  const double mu = merit.mu;
  if (std::abs(t) <= mu) return {0.5 * t * t, t};
  const double sign = t > 0.0 ? 1.0 : -1.0;
  return {mu * (std::abs(t) - 0.5 * mu), mu * sign};
}

/// Uniform pair weights c_ij = w off the diagonal; the default w = 1/2
/// makes the two-view identity-merit case the classical CCA objective
/// -tr((X^1)^T Sigma_12 X^2) (the symmetric double sum counts each pair
/// twice).
inline Matrix uniform_weights(Index m, double w = 0.5) {
  Matrix c = Matrix::Constant(m, m, w);
  c.diagonal().setZero();
  return c;
}

struct GccaProblem {
  BlockSpec blocks;
  Matrix weights;  // m-by-m, symmetric, nonnegative, zero diagonal
  Merit merit;
  Index p = 0;

  void validate() const {
    blocks.validate();
    merit.validate();
    const Index m = blocks.count();
    if (weights.rows() != m || weights.cols() != m)
      throw DimensionError("GccaProblem: weights must be m-by-m");
    for (Index i = 0; i < m; ++i) {
      if (weights(i, i) != 0.0)
        throw std::invalid_argument("GccaProblem: weights must have a zero diagonal");
      for (Index j = 0; j < m; ++j) {
        if (weights(i, j) < 0.0)
          throw std::invalid_argument("GccaProblem: weights must be nonnegative");
        if (weights(i, j) != weights(j, i))
          throw std::invalid_argument("GccaProblem: weights must be symmetric");
      }
    }
    if (!(p >= 1 && p <= blocks.min_dim()))
      throw std::invalid_argument("GccaProblem: require 1 <= p <= min block width");
  }
};

struct GccaValueGrad {
  double value = 0.0;
  Matrix gradient;
};

/// Minibatch GCCA objective
///   value = -sum_r sum_{i != j} c_ij g(s_ijr),
///   s_ijr = (X_r^[i])^T Sigma_hat_ij X_r^[j],
/// with Sigma_hat_ij the minibatch cross-covariance (1/l) Z_i^T Z_j, applied
/// through the slabs so no n_i-by-n_j block is formed. The gradient of block
/// i accumulates -(c_ij + c_ji) g'(s_ijr) Sigma_hat_ij X_r^[j] per column.
inline GccaValueGrad gcca_objective_sample(const Matrix& x, const std::vector<Matrix>& slabs,
                                           const GccaProblem& problem) {
  const Index m = problem.blocks.count();
  detail::require(static_cast<Index>(slabs.size()) == m,
                  "gcca objective: slab count does not match block count");
  detail::require(x.rows() == problem.blocks.total(),
                  "gcca objective: X rows do not match the feature partition");
  const Index p = x.cols();
  const Index l = slabs[0].rows();
  const double inv_l = 1.0 / static_cast<double>(l);

  // Projected slabs A_i = Z_i X^[i] (l-by-p each).
  std::vector<Matrix> projected(static_cast<size_t>(m));
  std::vector<Index> offsets(static_cast<size_t>(m));
  Index offset = 0;
  for (Index i = 0; i < m; ++i) {
    detail::require(slabs[static_cast<size_t>(i)].rows() == l,
                    "gcca objective: slabs disagree on batch size");
    detail::require(slabs[static_cast<size_t>(i)].cols() == problem.blocks.block_dims[static_cast<size_t>(i)],
                    "gcca objective: slab width does not match block");
    offsets[static_cast<size_t>(i)] = offset;
    projected[static_cast<size_t>(i)] =
        slabs[static_cast<size_t>(i)] * x.middleRows(offset, problem.blocks.block_dims[static_cast<size_t>(i)]);
    offset += problem.blocks.block_dims[static_cast<size_t>(i)];
  }

  GccaValueGrad out;
  out.gradient = Matrix::Zero(x.rows(), p);
  // Per-block accumulators B_i with column r = sum_j w_ij g'(s_ijr) A_j col r.
  std::vector<Matrix> accum(static_cast<size_t>(m), Matrix::Zero(l, p));
  for (Index i = 0; i < m; ++i) {
    for (Index j = i + 1; j < m; ++j) {
      const double w = problem.weights(i, j) + problem.weights(j, i);
      if (w == 0.0) continue;
      for (Index r = 0; r < p; ++r) {
        const double s =
            inv_l * projected[static_cast<size_t>(i)].col(r).dot(projected[static_cast<size_t>(j)].col(r));
        auto [g, slope] = merit_value_and_slope(s, problem.merit);
        out.value -= w * g;
        accum[static_cast<size_t>(i)].col(r) += w * slope * projected[static_cast<size_t>(j)].col(r);
        accum[static_cast<size_t>(j)].col(r) += w * slope * projected[static_cast<size_t>(i)].col(r);
      }
    }
  }
  for (Index i = 0; i < m; ++i) {
    out.gradient.middleRows(offsets[static_cast<size_t>(i)], problem.blocks.block_dims[static_cast<size_t>(i)])
        .noalias() = -inv_l * (slabs[static_cast<size_t>(i)].transpose() * accum[static_cast<size_t>(i)]);
  }
  return out;
}

/// Objective factory for empirical problems: closes the GCCA objective over
/// per-batch slabs.
inline BatchObjectiveFactory gcca_objective_factory(GccaProblem problem) {
  problem.validate();
  return [problem](const std::vector<Matrix>& slabs) {
    auto shared = std::make_shared<const std::vector<Matrix>>(slabs);
    ObjectiveSample sample;
    sample.value = [shared, problem](const Matrix& x) {
      return gcca_objective_sample(x, *shared, problem).value;
    };
    sample.grad = [shared, problem](const Matrix& x) {
      return gcca_objective_sample(x, *shared, problem).gradient;
    };
    return sample;
  };
}

/// Exact full-data GCCA objective from precomputed cross-covariance blocks.
/// The identity merit makes the objective bilinear, so it also carries an
/// exact Hessian action; the Huber merit is only C^1 and provides none.
inline SmoothObjective exact_gcca_objective(const std::shared_ptr<const EmpiricalData>& data,
                                            GccaProblem problem) {
  problem.validate();
  const Index m = problem.blocks.count();
  detail::require(static_cast<Index>(data->blocks.size()) == m,
                  "exact gcca objective: data/block mismatch");
  const double inv_n = 1.0 / static_cast<double>(data->num_samples);
  auto cross = std::make_shared<std::vector<std::vector<Matrix>>>(
      static_cast<size_t>(m), std::vector<Matrix>(static_cast<size_t>(m)));
  for (Index i = 0; i < m; ++i)
    for (Index j = i + 1; j < m; ++j)
      (*cross)[static_cast<size_t>(i)][static_cast<size_t>(j)] =
          inv_n * (data->blocks[static_cast<size_t>(i)].transpose() * data->blocks[static_cast<size_t>(j)]);

  auto eval = [cross, problem](const Matrix& x, bool want_grad) {
    const Index m_local = problem.blocks.count();
    const Index p = x.cols();
    GccaValueGrad out;
    out.gradient = Matrix::Zero(x.rows(), p);
    std::vector<Index> offsets(static_cast<size_t>(m_local));
    Index offset = 0;
    for (Index i = 0; i < m_local; ++i) {
      offsets[static_cast<size_t>(i)] = offset;
      offset += problem.blocks.block_dims[static_cast<size_t>(i)];
    }
    for (Index i = 0; i < m_local; ++i) {
      const Index ni = problem.blocks.block_dims[static_cast<size_t>(i)];
      for (Index j = i + 1; j < m_local; ++j) {
        const Index nj = problem.blocks.block_dims[static_cast<size_t>(j)];
        const double w = problem.weights(i, j) + problem.weights(j, i);
        if (w == 0.0) continue;
        const Matrix& sig = (*cross)[static_cast<size_t>(i)][static_cast<size_t>(j)];
        const Matrix xi = x.middleRows(offsets[static_cast<size_t>(i)], ni);
        const Matrix xj = x.middleRows(offsets[static_cast<size_t>(j)], nj);
        const Matrix sig_xj = sig * xj;
        for (Index r = 0; r < p; ++r) {
          const double s = xi.col(r).dot(sig_xj.col(r));
          auto [g, slope] = merit_value_and_slope(s, problem.merit);
          out.value -= w * g;
          if (want_grad) {
            out.gradient.middleRows(offsets[static_cast<size_t>(i)], ni).col(r) -=
                w * slope * sig_xj.col(r);
            out.gradient.middleRows(offsets[static_cast<size_t>(j)], nj).col(r) -=
                w * slope * (sig.transpose() * xi.col(r));
          }
        }
      }
    }
    return out;
  };

  SmoothObjective obj;
  obj.value = [eval](const Matrix& x) { return eval(x, false).value; };
  obj.gradient = [eval](const Matrix& x) { return eval(x, true).gradient; };
  if (problem.merit.kind == Merit::Kind::kIdentity) {
    obj.hess_vec = [eval](const Matrix&, const Matrix& d) { return eval(d, true).gradient; };
  }
  return obj;
}

struct GroundTruth {
  Matrix xbar;                     // stacked reference solution, n-by-p
  double tcc_ref = 0.0;            // sum of the canonical correlations below
  Vector canonical_correlations;   // descending, in [0, 1]
};

/// Classical two-view ground truth: whiten both marginals, take the top-p
/// singular triplets of the whitened cross-covariance, and map back.
inline GroundTruth cca_ground_truth(const Matrix& cov11, const Matrix& cov22,
                                    const Matrix& cov12, Index p) {
  detail::require(cov11.rows() == cov12.rows() && cov22.rows() == cov12.cols(),
                  "cca_ground_truth: covariance shapes disagree");
  if (!(p >= 1 && p <= std::min(cov11.rows(), cov22.rows())))
    throw std::invalid_argument("cca_ground_truth: p out of range");
  const Matrix w1 = spd_inv_sqrt(symmetrize(cov11)).mat();
  const Matrix w2 = spd_inv_sqrt(symmetrize(cov22)).mat();
  Eigen::BDCSVD<Matrix> svd(w1 * cov12 * w2, Eigen::ComputeThinU | Eigen::ComputeThinV);
  GroundTruth truth;
  truth.canonical_correlations = svd.singularValues().head(p);
  truth.tcc_ref = truth.canonical_correlations.sum();
  truth.xbar.resize(cov11.rows() + cov22.rows(), p);
  truth.xbar.topRows(cov11.rows()) = w1 * svd.matrixU().leftCols(p);
  truth.xbar.bottomRows(cov22.rows()) = w2 * svd.matrixV().leftCols(p);
  return truth;
}

/// Sum of canonical correlations between the column spaces of two equally
/// tall matrices (data projections). Throws when either Gram matrix is
/// numerically rank deficient.
inline double tcc(const Matrix& a, const Matrix& b) {
  detail::require(a.rows() == b.rows(), "tcc: row counts differ");
  const double scale_a = a.squaredNorm() / static_cast<double>(a.cols());
  const double scale_b = b.squaredNorm() / static_cast<double>(b.cols());
  Matrix ga = (a.transpose() * a) / scale_a;
  Matrix gb = (b.transpose() * b) / scale_b;
  Matrix wa, wb;
  try {
    wa = spd_inv_sqrt(symmetrize(ga), 1e-10).mat() / std::sqrt(scale_a);
    wb = spd_inv_sqrt(symmetrize(gb), 1e-10).mat() / std::sqrt(scale_b);
  } catch (const NotPositiveDefiniteError&) {
    throw PreconditionError("tcc: a projected block is rank deficient");
  }
  Eigen::BDCSVD<Matrix> svd(wa * (a.transpose() * b) * wb);
  return svd.singularValues().sum();
}

/// Proportion of Correlations Captured:
///   PCC(X) = TCC(Z1 X^[1], Z2 X^[2]) / TCC(Z1 Xbar^[1], Z2 Xbar^[2]).
/// Finite-sample values may exceed 1; they are reported unclamped.
inline double pcc(const Matrix& x, const Matrix& z1, const Matrix& z2,
                  const GroundTruth& truth) {
  const Index n1 = z1.cols();
  const Index n2 = z2.cols();
  detail::require(x.rows() == n1 + n2, "pcc: X rows do not match the two blocks");
  detail::require(truth.xbar.rows() == n1 + n2, "pcc: ground truth does not match blocks");
  const double captured = tcc(z1 * x.topRows(n1), z2 * x.bottomRows(n2));
  const double reference = tcc(z1 * truth.xbar.topRows(n1), z2 * truth.xbar.bottomRows(n2));
  return captured / reference;
}

/// Population-covariance TCC of a stacked two-view X (used with synthetic
/// problems where the covariances are known in closed form).
inline double tcc_population(const Matrix& x, const Matrix& cov11, const Matrix& cov22,
                             const Matrix& cov12) {
  const Index n1 = cov11.rows();
  const Index n2 = cov22.rows();
  detail::require(x.rows() == n1 + n2, "tcc_population: X rows do not match");
  const Matrix x1 = x.topRows(n1);
  const Matrix x2 = x.bottomRows(n2);
  Matrix wa, wb;
  try {
    wa = spd_inv_sqrt(symmetrize(x1.transpose() * cov11 * x1)).mat();
    wb = spd_inv_sqrt(symmetrize(x2.transpose() * cov22 * x2)).mat();
  } catch (const NotPositiveDefiniteError&) {
    throw PreconditionError("tcc_population: a projected block is rank deficient");
  }
  Eigen::BDCSVD<Matrix> svd(wa * (x1.transpose() * cov12 * x2) * wb);
  return svd.singularValues().sum();
}

/// Wires a GCCA problem over a concrete dataset into the stochastic
/// interface: minibatch block-diagonal constraint actions and minibatch
/// objective draws (shared batches by default), plus the exact full-data
/// pair.
inline StochasticProblem gcca_problem_to_stochastic(const GccaProblem& problem,
                                                    std::shared_ptr<const EmpiricalData> data,
                                                    const EmpiricalOptions& options) {
  problem.validate();
  detail::require(static_cast<Index>(data->blocks.size()) == problem.blocks.count(),
                  "gcca_problem_to_stochastic: dataset block count mismatch");
  for (Index i = 0; i < problem.blocks.count(); ++i)
    detail::require(data->blocks[static_cast<size_t>(i)].cols() ==
                        problem.blocks.block_dims[static_cast<size_t>(i)],
                    "gcca_problem_to_stochastic: dataset block width mismatch");
  ExactPair exact;
  exact.objective = exact_gcca_objective(data, problem);
  exact.constraint = exact_constraint_from_data(data);
  StochasticProblem stochastic = empirical_problem_from_data(
      data, gcca_objective_factory(problem), std::move(exact), options);
  stochastic.cols = problem.p;
  return stochastic;
}

// ---------------------------------------------------------------------------
// Synthetic planted-correlation CCA (two views).
// ---------------------------------------------------------------------------

struct SyntheticCcaSpec {
  Index n1 = 25;
  Index n2 = 25;
  Index p = 5;
  Vector rho;          // planted canonical correlations, each in [0, 1)
  Index num_samples = 20000;
};

struct SyntheticCca {
  std::vector<Matrix> blocks;   // generated dataset, one N-by-n_i matrix per view
  GccaProblem problem;          // two views, identity merit, c_ij = 1/2
  GroundTruth population_truth; // exact directions and correlations
  Matrix pop_cov12;             // population cross-covariance Q1 P Q2^T
};

/// Joint Gaussian with identity block covariances and cross-covariance
/// diag(rho) in canonical coordinates, rotated by seeded orthogonal maps.
/// Canonical pairs are sampled coordinate-wise (v_i = rho_i u_i +
/// sqrt(1-rho_i^2) g_i), so no joint n-by-n factor is ever formed.
inline SyntheticCca make_synthetic_cca(const SyntheticCcaSpec& spec, std::uint64_t seed) {
  if (spec.rho.size() != spec.p)
    throw std::invalid_argument("synthetic cca: need one rho per component");
  for (Index i = 0; i < spec.rho.size(); ++i)
    if (!(spec.rho(i) >= 0.0 && spec.rho(i) < 1.0))
      throw std::invalid_argument("synthetic cca: rho must lie in [0, 1)");
  if (!(spec.p >= 1 && spec.p <= std::min(spec.n1, spec.n2)))
    throw std::invalid_argument("synthetic cca: p out of range");
  if (spec.num_samples < 1) throw std::invalid_argument("synthetic cca: need samples");

  Vector rho = spec.rho;
  std::sort(rho.begin(), rho.end(), std::greater<double>());

  Rng rng(seed);
  std::normal_distribution<double> gauss;
  auto random_orthogonal = [&rng, &gauss](Index n) {
    Matrix g(n, n);
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i) g(i, j) = gauss(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Index j = 0; j < n; ++j)
      if (r(j, j) < 0) q.col(j) *= -1.0;
    return q;
  };
  const Matrix q1 = random_orthogonal(spec.n1);
  const Matrix q2 = random_orthogonal(spec.n2);

  Matrix u(spec.num_samples, spec.n1);
  Matrix v(spec.num_samples, spec.n2);
  for (Index s = 0; s < spec.num_samples; ++s) {
    for (Index i = 0; i < spec.n1; ++i) u(s, i) = gauss(rng);
    for (Index i = 0; i < spec.n2; ++i) {
      const double g = gauss(rng);
      v(s, i) = i < spec.p ? rho(i) * u(s, i) + std::sqrt(1.0 - rho(i) * rho(i)) * g : g;
    }
  }

  SyntheticCca out;
  out.blocks = {u * q1.transpose(), v * q2.transpose()};
  out.problem.blocks = BlockSpec{{spec.n1, spec.n2}};
  out.problem.weights = uniform_weights(2);
  out.problem.merit = Merit{Merit::Kind::kIdentity, 1.0};
  out.problem.p = spec.p;
  out.problem.validate();

  out.population_truth.canonical_correlations = rho;
  out.population_truth.tcc_ref = rho.sum();
  out.population_truth.xbar.setZero(spec.n1 + spec.n2, spec.p);
  out.population_truth.xbar.topRows(spec.n1) = q1.leftCols(spec.p);
  out.population_truth.xbar.bottomRows(spec.n2) = q2.leftCols(spec.p);

  Matrix planted = Matrix::Zero(spec.n1, spec.n2);
  planted.diagonal().head(spec.p) = rho;
  out.pop_cov12 = q1 * planted * q2.transpose();
  return out;
}

}  // namespace gstiefel
