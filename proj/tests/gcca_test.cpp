#include "gstiefel/gcca.hpp"

#include <gtest/gtest.h>

#include "gstiefel/optimizer.hpp"
#include "test_support.hpp"

namespace gstiefel {
namespace {

using testing::fd_gradient;
using testing::random_matrix;
using testing::rel_error;

GccaProblem two_view_problem(Index n1, Index n2, Index p, Merit merit) {
  GccaProblem problem;
  problem.blocks = BlockSpec{{n1, n2}};
  problem.weights = uniform_weights(2);
  problem.merit = merit;
  problem.p = p;
  problem.validate();
  return problem;
}

TEST(Merit, HuberValueAndSlope) {
  Merit huber{Merit::Kind::kHuber, 1.0};
  auto [v0, s0] = merit_value_and_slope(0.0, huber);
  EXPECT_EQ(v0, 0.0);
  EXPECT_EQ(s0, 0.0);
  auto [v2, s2] = merit_value_and_slope(2.0, huber);
  EXPECT_DOUBLE_EQ(v2, 1.5);  // mu(|t| - mu/2) = 1 * (2 - 0.5)
  EXPECT_DOUBLE_EQ(s2, 1.0);
  auto [vm, sm] = merit_value_and_slope(-2.0, huber);
  EXPECT_DOUBLE_EQ(vm, 1.5);
  EXPECT_DOUBLE_EQ(sm, -1.0);
}

TEST(Merit, ContinuousAtThreshold) {
  const double mu = 0.7;
  Merit huber{Merit::Kind::kHuber, mu};
  auto [v_in, s_in] = merit_value_and_slope(mu, huber);
  auto [v_out, s_out] = merit_value_and_slope(mu * (1.0 + 1e-12), huber);
  EXPECT_NEAR(v_in, 0.5 * mu * mu, 1e-15);
  EXPECT_NEAR(v_out, v_in, 1e-12);
  EXPECT_NEAR(s_out, s_in, 1e-12);
  EXPECT_DOUBLE_EQ(s_in, mu);
}

TEST(Merit, IdentityPassesThrough) {
  auto [v, s] = merit_value_and_slope(-3.25, Merit{Merit::Kind::kIdentity, 1.0});
  EXPECT_EQ(v, -3.25);
  EXPECT_EQ(s, 1.0);
}

TEST(GccaObjective, ZeroPointIsZero) {
  Rng rng(90);
  GccaProblem problem = two_view_problem(4, 3, 2, Merit{Merit::Kind::kIdentity, 1.0});
  std::vector<Matrix> slabs{random_matrix(6, 4, rng), random_matrix(6, 3, rng)};
  GccaValueGrad out = gcca_objective_sample(Matrix::Zero(7, 2), slabs, problem);
  EXPECT_EQ(out.value, 0.0);
  EXPECT_EQ(out.gradient.norm(), 0.0);
}

// m = 2, identity merit, c_12 = c_21 = 1/2: the symmetric double sum counts
// the pair twice, giving -tr((X^1)^T Sigma_hat_12 X^2).
TEST(GccaObjective, TwoViewIdentityReducesToNegativeTrace) {
  Rng rng(91);
  const Index n1 = 4, n2 = 3, p = 2, l = 9;
  GccaProblem problem = two_view_problem(n1, n2, p, Merit{Merit::Kind::kIdentity, 1.0});
  std::vector<Matrix> slabs{random_matrix(l, n1, rng), random_matrix(l, n2, rng)};
  Matrix x = random_matrix(n1 + n2, p, rng);
  GccaValueGrad out = gcca_objective_sample(x, slabs, problem);
  Matrix sigma12 = slabs[0].transpose() * slabs[1] / static_cast<double>(l);
  const double expected = -(x.topRows(n1).transpose() * sigma12 * x.bottomRows(n2)).trace();
  EXPECT_NEAR(out.value, expected, 1e-12 * (1.0 + std::abs(expected)));
}

TEST(GccaObjective, GradientMatchesFiniteDifferencesBothMerits) {
  Rng rng(92);
  const Index n1 = 4, n2 = 3, p = 2, l = 8;
  std::vector<Matrix> slabs{random_matrix(l, n1, rng), random_matrix(l, n2, rng)};
  Matrix x = random_matrix(n1 + n2, p, rng);

  // Pick mu so the batch scores straddle the Huber threshold.
  GccaProblem identity = two_view_problem(n1, n2, p, Merit{Merit::Kind::kIdentity, 1.0});
  std::vector<double> scores;
  {
    Matrix a = slabs[0] * x.topRows(n1);
    Matrix b = slabs[1] * x.bottomRows(n2);
    for (Index r = 0; r < p; ++r)
      scores.push_back(std::abs(a.col(r).dot(b.col(r))) / static_cast<double>(l));
  }
  const double mu = 0.5 * (*std::max_element(scores.begin(), scores.end()) +
                           *std::min_element(scores.begin(), scores.end()));
  GccaProblem huber = two_view_problem(n1, n2, p, Merit{Merit::Kind::kHuber, mu});

  for (const GccaProblem& problem : {identity, huber}) {
    auto value = [&](const Matrix& z) {
      return gcca_objective_sample(z, slabs, problem).value;
    };
    Matrix fd = fd_gradient(value, x, 1e-5);
    Matrix grad = gcca_objective_sample(x, slabs, problem).gradient;
    EXPECT_LT(rel_error(fd, grad), 1e-6);
  }
}

TEST(GccaObjective, ExactMatchesFullBatchSample) {
  Rng rng(93);
  const Index n1 = 5, n2 = 4, p = 2, samples = 40;
  auto data = make_empirical_data(
      {random_matrix(samples, n1, rng), random_matrix(samples, n2, rng)});
  GccaProblem problem = two_view_problem(n1, n2, p, Merit{Merit::Kind::kHuber, 0.4});
  SmoothObjective exact = exact_gcca_objective(data, problem);
  std::vector<Matrix> full_slabs{data->blocks[0], data->blocks[1]};
  Matrix x = random_matrix(n1 + n2, p, rng, 0.6);
  GccaValueGrad sampled = gcca_objective_sample(x, full_slabs, problem);
  EXPECT_NEAR(exact.value(x), sampled.value, 1e-12 * (1.0 + std::abs(sampled.value)));
  EXPECT_LT(rel_error(exact.gradient(x), sampled.gradient), 1e-12);
}

TEST(GccaObjective, IdentityMeritHessianIsConsistent) {
  Rng rng(94);
  const Index n1 = 4, n2 = 4, p = 2, samples = 30;
  auto data = make_empirical_data(
      {random_matrix(samples, n1, rng), random_matrix(samples, n2, rng)});
  GccaProblem problem = two_view_problem(n1, n2, p, Merit{Merit::Kind::kIdentity, 1.0});
  SmoothObjective exact = exact_gcca_objective(data, problem);
  ASSERT_TRUE(static_cast<bool>(exact.hess_vec));
  Matrix x = random_matrix(n1 + n2, p, rng);
  Matrix d = random_matrix(n1 + n2, p, rng);
  Matrix fd = testing::fd_directional(exact.gradient, x, d, 1e-6);
  EXPECT_LT(rel_error(fd, exact.hess_vec(x, d)), 1e-7);
}

TEST(CcaGroundTruth, ZeroCrossCovarianceGivesZeroCorrelations) {
  GroundTruth truth =
      cca_ground_truth(Matrix::Identity(4, 4), Matrix::Identity(3, 3), Matrix::Zero(4, 3), 2);
  EXPECT_NEAR(truth.canonical_correlations.norm(), 0.0, 1e-14);
  EXPECT_NEAR(truth.tcc_ref, 0.0, 1e-14);
}

TEST(CcaGroundTruth, RecoversPlantedDiagonal) {
  Matrix cov12 = Matrix::Zero(5, 4);
  cov12(0, 0) = 0.9;
  cov12(1, 1) = 0.8;
  cov12(2, 2) = 0.7;
  GroundTruth truth =
      cca_ground_truth(Matrix::Identity(5, 5), Matrix::Identity(4, 4), cov12, 3);
  EXPECT_NEAR(truth.canonical_correlations(0), 0.9, 1e-12);
  EXPECT_NEAR(truth.canonical_correlations(1), 0.8, 1e-12);
  EXPECT_NEAR(truth.canonical_correlations(2), 0.7, 1e-12);
  EXPECT_NEAR(truth.tcc_ref, 2.4, 1e-12);
}

TEST(CcaGroundTruth, WhiteningMakesBlocksFeasible) {
  Rng rng(95);
  const Index n1 = 6, n2 = 5, p = 3;
  Matrix cov11 = testing::random_spd(n1, rng, 0.5, 2.0);
  Matrix cov22 = testing::random_spd(n2, rng, 0.5, 2.0);
  Matrix cov12 = 0.3 * random_matrix(n1, n2, rng);
  GroundTruth truth = cca_ground_truth(cov11, cov22, cov12, p);
  Matrix x1 = truth.xbar.topRows(n1);
  Matrix x2 = truth.xbar.bottomRows(n2);
  EXPECT_LT((x1.transpose() * cov11 * x1 - Matrix::Identity(p, p)).norm(), 1e-10);
  EXPECT_LT((x2.transpose() * cov22 * x2 - Matrix::Identity(p, p)).norm(), 1e-10);
}

TEST(Pcc, GroundTruthScoresOne) {
  Rng rng(96);
  SyntheticCcaSpec spec;
  spec.n1 = 6;
  spec.n2 = 5;
  spec.p = 2;
  spec.rho = Vector{{0.8, 0.6}};
  spec.num_samples = 500;
  SyntheticCca synth = make_synthetic_cca(spec, 17);
  const Matrix& z1 = synth.blocks[0];
  const Matrix& z2 = synth.blocks[1];
  Matrix cov11 = z1.transpose() * z1 / 500.0;
  Matrix cov22 = z2.transpose() * z2 / 500.0;
  Matrix cov12 = z1.transpose() * z2 / 500.0;
  GroundTruth empirical = cca_ground_truth(cov11, cov22, cov12, 2);
  EXPECT_NEAR(pcc(empirical.xbar, z1, z2, empirical), 1.0, 1e-10);
}

TEST(Pcc, InvariantUnderPerBlockInvertibleMaps) {
  Rng rng(97);
  SyntheticCcaSpec spec;
  spec.n1 = 5;
  spec.n2 = 5;
  spec.p = 2;
  spec.rho = Vector{{0.7, 0.5}};
  spec.num_samples = 400;
  SyntheticCca synth = make_synthetic_cca(spec, 23);
  const Matrix& z1 = synth.blocks[0];
  const Matrix& z2 = synth.blocks[1];
  GroundTruth empirical = cca_ground_truth(z1.transpose() * z1 / 400.0,
                                           z2.transpose() * z2 / 400.0,
                                           z1.transpose() * z2 / 400.0, 2);
  Matrix x = random_matrix(10, 2, rng);
  const double base = pcc(x, z1, z2, empirical);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix r1 = random_matrix(2, 2, rng) + 3.0 * Matrix::Identity(2, 2);
    Matrix r2 = random_matrix(2, 2, rng) + 3.0 * Matrix::Identity(2, 2);
    Matrix mapped(10, 2);
    mapped.topRows(5) = x.topRows(5) * r1;
    mapped.bottomRows(5) = x.bottomRows(5) * r2;
    EXPECT_NEAR(pcc(mapped, z1, z2, empirical), base, 1e-10);
  }
}

TEST(Pcc, OrthogonalComplementCapturesNothing) {
  SyntheticCcaSpec spec;
  spec.n1 = 8;
  spec.n2 = 8;
  spec.p = 3;
  spec.rho = Vector{{0.9, 0.8, 0.7}};
  spec.num_samples = 10;  // population quantities only
  SyntheticCca synth = make_synthetic_cca(spec, 31);
  // Columns of the rotations beyond the planted block span the complement.
  Matrix x(16, 3);
  GroundTruth population = synth.population_truth;
  // Recover Q columns from the planted construction: xbar holds the first p.
  // Build complement directions from the population cross-covariance kernel.
  Eigen::BDCSVD<Matrix> svd(synth.pop_cov12, Eigen::ComputeFullU | Eigen::ComputeFullV);
  x.topRows(8) = svd.matrixU().rightCols(3);
  x.bottomRows(8) = svd.matrixV().rightCols(3);
  const double captured =
      tcc_population(x, Matrix::Identity(8, 8), Matrix::Identity(8, 8), synth.pop_cov12);
  EXPECT_NEAR(captured, 0.0, 1e-10);
  const double reference = tcc_population(population.xbar, Matrix::Identity(8, 8),
                                          Matrix::Identity(8, 8), synth.pop_cov12);
  EXPECT_NEAR(reference, 2.4, 1e-10);
}

// The whitened-SVD solution is optimal: no random feasible X captures more
// population correlation than the ground truth.
TEST(Pcc, GroundTruthDominatesRandomFeasiblePoints) {
  Rng rng(98);
  SyntheticCcaSpec spec;
  spec.n1 = 6;
  spec.n2 = 6;
  spec.p = 2;
  spec.rho = Vector{{0.85, 0.55}};
  spec.num_samples = 10;
  SyntheticCca synth = make_synthetic_cca(spec, 41);
  const Matrix eye1 = Matrix::Identity(6, 6);
  const double best = tcc_population(synth.population_truth.xbar, eye1, eye1, synth.pop_cov12);
  EXPECT_NEAR(best, 1.4, 1e-10);
  for (int trial = 0; trial < 1000; ++trial) {
    Matrix x(12, 2);
    Eigen::HouseholderQR<Matrix> qr1(random_matrix(6, 2, rng));
    Eigen::HouseholderQR<Matrix> qr2(random_matrix(6, 2, rng));
    x.topRows(6) = Matrix(qr1.householderQ()).leftCols(2);
    x.bottomRows(6) = Matrix(qr2.householderQ()).leftCols(2);
    EXPECT_LE(tcc_population(x, eye1, eye1, synth.pop_cov12), best + 1e-8);
  }
}

TEST(SyntheticCca, PopulationCorrelationsMatchPlanted) {
  SyntheticCcaSpec spec;
  spec.n1 = 7;
  spec.n2 = 6;
  spec.p = 3;
  spec.rho = Vector{{0.9, 0.8, 0.7}};
  spec.num_samples = 10;
  SyntheticCca synth = make_synthetic_cca(spec, 51);
  GroundTruth from_covs = cca_ground_truth(Matrix::Identity(7, 7), Matrix::Identity(6, 6),
                                           synth.pop_cov12, 3);
  EXPECT_LT((from_covs.canonical_correlations - synth.population_truth.canonical_correlations)
                .norm(),
            1e-10);
}

TEST(SyntheticCca, FiniteSampleCorrelationsNearPlanted) {
  SyntheticCcaSpec spec;
  spec.n1 = 25;
  spec.n2 = 25;
  spec.p = 3;
  spec.rho = Vector{{0.9, 0.8, 0.7}};
  spec.num_samples = 20000;
  SyntheticCca synth = make_synthetic_cca(spec, 61);
  const double n = static_cast<double>(spec.num_samples);
  Matrix z1 = standardize(synth.blocks[0], true, false);
  Matrix z2 = standardize(synth.blocks[1], true, false);
  GroundTruth empirical = cca_ground_truth(z1.transpose() * z1 / n, z2.transpose() * z2 / n,
                                           z1.transpose() * z2 / n, 3);
  for (Index i = 0; i < 3; ++i)
    EXPECT_NEAR(empirical.canonical_correlations(i),
                synth.population_truth.canonical_correlations(i), 0.05);
}

TEST(SyntheticCca, InvalidRhoRejected) {
  SyntheticCcaSpec spec;
  spec.n1 = 4;
  spec.n2 = 4;
  spec.p = 1;
  spec.rho = Vector{{1.0}};
  spec.num_samples = 10;
  EXPECT_THROW(make_synthetic_cca(spec, 1), std::invalid_argument);
  spec.rho = Vector{{-0.1}};
  EXPECT_THROW(make_synthetic_cca(spec, 1), std::invalid_argument);
}

TEST(GccaStochastic, FullBatchDrawEqualsExactProblem) {
  Rng rng(99);
  const Index n1 = 5, n2 = 4, samples = 30;
  auto data = make_empirical_data(
      {random_matrix(samples, n1, rng), random_matrix(samples, n2, rng)});
  GccaProblem problem = two_view_problem(n1, n2, 2, Merit{Merit::Kind::kIdentity, 1.0});
  EmpiricalOptions options;
  options.batch_size = samples;
  StochasticProblem stochastic = gcca_problem_to_stochastic(problem, data, options);
  Rng draw_rng(2);
  SamplePair pair = draw_sample_pair(stochastic, draw_rng);
  Matrix x = random_matrix(n1 + n2, 2, rng, 0.5);
  EXPECT_LT((pair.constraint.apply(x) - stochastic.exact->constraint.apply(x)).norm(), 1e-12);
  EXPECT_LT((pair.objective.grad(x) - stochastic.exact->objective.gradient(x)).norm(), 1e-12);
}

// The two-block constraint action is block diagonal: block i of M X only
// involves X^[i] through the i-th view's second moment.
TEST(GccaStochastic, ConstraintActionIsBlockDiagonal) {
  Rng rng(100);
  const Index n1 = 4, n2 = 3, samples = 25;
  auto data = make_empirical_data(
      {random_matrix(samples, n1, rng), random_matrix(samples, n2, rng)});
  GccaProblem problem = two_view_problem(n1, n2, 2, Merit{Merit::Kind::kIdentity, 1.0});
  EmpiricalOptions options;
  options.batch_size = samples;
  StochasticProblem stochastic = gcca_problem_to_stochastic(problem, data, options);

  Matrix x = random_matrix(n1 + n2, 2, rng);
  Matrix mx = stochastic.exact->constraint.apply(x);
  Matrix cov11 = data->blocks[0].transpose() * data->blocks[0] / static_cast<double>(samples);
  Matrix cov22 = data->blocks[1].transpose() * data->blocks[1] / static_cast<double>(samples);
  EXPECT_LT((mx.topRows(n1) - cov11 * x.topRows(n1)).norm(), 1e-12);
  EXPECT_LT((mx.bottomRows(n2) - cov22 * x.bottomRows(n2)).norm(), 1e-12);

  Matrix x2 = x;
  x2.bottomRows(n2).setRandom();
  Matrix mx2 = stochastic.exact->constraint.apply(x2);
  EXPECT_EQ(mx.topRows(n1), mx2.topRows(n1));
}

// Feeding the deterministic reduction of the GCCA problem to the stochastic
// solver recovers the exact-gradient trajectory.
TEST(GccaStochastic, DeterministicReductionRecoversGdTrajectory) {
  Rng rng(101);
  const Index n1 = 5, n2 = 4, p = 2, samples = 40;
  auto data = make_empirical_data(
      {random_matrix(samples, n1, rng), random_matrix(samples, n2, rng)});
  GccaProblem problem = two_view_problem(n1, n2, p, Merit{Merit::Kind::kIdentity, 1.0});
  EmpiricalOptions options;
  options.batch_size = samples;
  StochasticProblem stochastic = gcca_problem_to_stochastic(problem, data, options);
  StochasticProblem reduced = deterministic_problem(stochastic.exact->objective,
                                                    stochastic.exact->constraint, n1 + n2, p);

  Matrix x0 = random_matrix(n1 + n2, p, rng, 0.4);
  const double step = 0.05;
  const Index iters = 25;
  const PenaltyParams params(0.5);
  RunResult sg = cdfsg_run(reduced, x0, StepSchedule(2.0, step, iters + 1), params, 5);
  RunResult gd = deterministic_gd_run(stochastic.exact->objective,
                                      stochastic.exact->constraint, x0, step, iters, params);
  EXPECT_EQ(sg.x, gd.x);
}

}  // namespace
}  // namespace gstiefel
