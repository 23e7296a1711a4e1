#include "gstiefel/oracle.hpp"

#include <gtest/gtest.h>

#include "test_problems.hpp"
#include "test_support.hpp"

namespace gstiefel {
namespace {

using testing::random_matrix;
using testing::random_spd;
using testing::rel_error;

TEST(CTheta, ZeroAndIdentity) {
  ConstraintSample identity{[](const Matrix& v) { return v; }, "id"};
  EXPECT_EQ(c_theta(Matrix::Zero(5, 2), identity).mat(), Matrix::Zero(2, 2));
  Rng rng(40);
  Matrix q = testing::random_orthogonal(6, rng).leftCols(2);
  EXPECT_TRUE(c_theta(q, identity).mat().isApprox(Matrix::Identity(2, 2), 1e-12));
}

TEST(CTheta, SlabActionMatchesExplicitGram) {
  Rng rng(41);
  const Index l = 7, n = 5, p = 2;
  Matrix z = random_matrix(l, n, rng);
  auto slabs = std::make_shared<const std::vector<Matrix>>(std::vector<Matrix>{z});
  ConstraintSample s = constraint_sample_from_slabs(slabs, "test");
  Matrix x = random_matrix(n, p, rng);
  Matrix zx = z * x;
  Matrix expected = (1.0 / l) * zx.transpose() * zx;
  EXPECT_LT((c_theta(x, s).mat() - expected).norm(), 1e-12);
}

TEST(HXiValue, MatchesScalarPenaltyExample) {
  // U = 1, V = 1, f_xi(x) = x^2/2, beta = 6 -> -1.5, as for h_value.
  ObjectiveSample o;
  o.value = [](const Matrix& x) { return 0.5 * x.squaredNorm(); };
  o.grad = [](const Matrix& x) { return x; };
  Matrix u(1, 1);
  u << 1.0;
  EXPECT_NEAR(h_xi_value(u, SymMatrix::Identity(1), o, PenaltyParams(6.0)), -1.5, 1e-14);
}

TEST(HXiValue, IdentityTrackerOffset) {
  Rng rng(42);
  ObjectiveSample o;
  o.value = [](const Matrix& x) { return x.array().cos().sum(); };
  o.grad = [](const Matrix& x) { return Matrix(-x.array().sin().matrix()); };
  Matrix u = random_matrix(4, 2, rng);
  const double beta = 3.0;
  EXPECT_NEAR(h_xi_value(u, SymMatrix::Identity(2), o, PenaltyParams(beta)),
              o.value(u) - beta * 2.0 / 3.0, 1e-12);
}

TEST(HXiValue, ZeroUCollapsesFirstArgument) {
  Rng rng(43);
  ObjectiveSample o;
  o.value = [](const Matrix& x) { return x.squaredNorm() + 1.0; };
  o.grad = [](const Matrix& x) { return Matrix(2.0 * x); };
  SymMatrix v = symmetrize(random_spd(2, rng, 0.1, 1.5));
  const double beta = 2.0;
  const Matrix vm = v.mat();
  const double trace_term = (vm * vm * vm).trace() - 3.0 * vm.trace();
  EXPECT_NEAR(h_xi_value(Matrix::Zero(5, 2), v, o, PenaltyParams(beta)),
              1.0 + beta / 6.0 * trace_term, 1e-13);
}

TEST(HXiValue, MissingValueCapabilityThrows) {
  ObjectiveSample o;
  o.grad = [](const Matrix& x) { return x; };
  EXPECT_THROW(h_xi_value(Matrix::Zero(2, 1), SymMatrix::Identity(1), o, PenaltyParams(1.0)),
               CapabilityError);
}

TEST(WDirection, AtZeroReducesToScaledSampleGradient) {
  Rng rng(44);
  Matrix g0 = random_matrix(5, 2, rng);
  ObjectiveSample o;
  o.grad = [g0](const Matrix&) { return g0; };
  ConstraintSample s{[](const Matrix& v) { return v; }, "id"};
  Matrix w = w_direction(Matrix::Zero(5, 2), SymMatrix::Zero(2), o, s, PenaltyParams(2.0));
  EXPECT_TRUE(w.isApprox(1.5 * g0, 1e-15));
}

// The closed form of W must coincide with grad h when fed the exact oracles
// and Y = X^T M X. This is the gate for building the optimizers on top.
TEST(WDirection, ExactOraclesReproduceHGradBitForBit) {
  Rng rng(45);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 6, p = 2;
    Matrix a = random_spd(n, rng, -1.0, 1.0);
    SmoothObjective obj = quadratic_objective(a);
    ConstantConstraint cons = constraint_from_matrix(random_spd(n, rng, 0.5, 2.0));
    Matrix x = random_matrix(n, p, rng, 0.7);
    const PenaltyParams params(1.7);

    ObjectiveSample o{obj.gradient, obj.value, "exact"};
    ConstraintSample s{cons.apply, "exact"};
    SymMatrix y = gram(x, cons.apply);
    Matrix w = w_direction(x, y, o, s, params);
    Matrix g = h_grad(x, obj, cons, params);
    EXPECT_EQ(w, g);
  }
}

// Exhaustive unbiasedness over the finite support: the uniform average of
// W over all (xi, theta) atom pairs at Y = C(X) equals the exact grad h.
TEST(WDirection, ExhaustiveAtomAverageIsUnbiased) {
  Rng rng(46);
  const Index samples = 60, n1 = 4, n2 = 3;
  testing::EmpiricalFixture fx = testing::make_cross_fixture(rng, samples, n1, n2);
  const PenaltyParams params(0.8);

  for (int probe = 0; probe < 5; ++probe) {
    Matrix x = random_matrix(fx.n, 2, rng, 0.6);
    SymMatrix y = gram(x, fx.exact.constraint.apply);
    Matrix mean = Matrix::Zero(fx.n, 2);
    for (Index i = 0; i < samples; ++i) {
      ConstraintSample si = constraint_atom(*fx.data, fx.factory, i);
      for (Index j = 0; j < samples; ++j) {
        ObjectiveSample oj = objective_atom(*fx.data, fx.factory, j);
        mean += w_direction(x, y, oj, si, params);
      }
    }
    mean /= static_cast<double>(samples) * static_cast<double>(samples);
    Matrix exact = h_grad(x, fx.exact.objective, fx.exact.constraint, params);
    EXPECT_LT(rel_error(mean, exact), 1e-10) << "probe=" << probe;
  }
}

TEST(EmpiricalProblem, FullBatchDrawEqualsExactOperators) {
  Rng rng(47);
  testing::EmpiricalFixture fx = testing::make_cross_fixture(rng, 24, 4, 3);
  EmpiricalOptions options;
  options.batch_size = 24;  // the whole dataset
  StochasticProblem problem =
      empirical_problem_from_data(fx.data, fx.factory, fx.exact, options);

  Rng draw_rng(7);
  SamplePair pair = draw_sample_pair(problem, draw_rng);
  Matrix x = random_matrix(fx.n, 2, rng);
  EXPECT_LT((pair.constraint.apply(x) - fx.exact.constraint.apply(x)).norm(), 1e-12);
  EXPECT_LT((pair.objective.grad(x) - fx.exact.objective.gradient(x)).norm(), 1e-12);
  EXPECT_NEAR(pair.objective.value(x), fx.exact.objective.value(x), 1e-12);
}

TEST(EmpiricalProblem, DisjointHalvesAverageToFullAction) {
  Rng rng(48);
  testing::EmpiricalFixture fx = testing::make_cross_fixture(rng, 30, 4, 3);
  std::vector<Index> first_half(15), second_half(15);
  std::iota(first_half.begin(), first_half.end(), Index{0});
  std::iota(second_half.begin(), second_half.end(), Index{15});
  auto s1 = constraint_sample_from_slabs(
      std::make_shared<const std::vector<Matrix>>(gather_slabs(*fx.data, first_half)), "h1");
  auto s2 = constraint_sample_from_slabs(
      std::make_shared<const std::vector<Matrix>>(gather_slabs(*fx.data, second_half)), "h2");
  Matrix x = random_matrix(fx.n, 2, rng);
  Matrix averaged = 0.5 * (s1.apply(x) + s2.apply(x));
  EXPECT_LT((averaged - fx.exact.constraint.apply(x)).norm(), 1e-12);
}

TEST(EmpiricalProblem, OnePassBatchCountingWithRemainder) {
  Rng rng(49);
  testing::EmpiricalFixture fx = testing::make_cross_fixture(rng, 100, 3, 2);
  EmpiricalOptions options;
  options.batch_size = 7;
  StochasticProblem problem =
      empirical_problem_from_data(fx.data, fx.factory, fx.exact, options);

  Rng draw_rng(11);
  std::vector<Index> sizes;
  Matrix x = random_matrix(fx.n, 2, rng);
  Matrix weighted = Matrix::Zero(fx.n, 2);
  for (int b = 0; b < 15; ++b) {
    SamplePair pair = draw_sample_pair(problem, draw_rng);
    const std::string& tag = pair.constraint.descriptor;
    const Index size = std::stol(tag.substr(tag.find('#') + 1));
    sizes.push_back(size);
    weighted += (static_cast<double>(size) / 100.0) * pair.constraint.apply(x);
  }
  // 14 full batches of 7 plus a final short batch of 2, used as-is and
  // weighted by its own size, reproduce the full-data action.
  EXPECT_EQ(std::count(sizes.begin(), sizes.end(), 7), 14);
  EXPECT_EQ(std::count(sizes.begin(), sizes.end(), 2), 1);
  EXPECT_LT((weighted - fx.exact.constraint.apply(x)).norm(), 1e-12);
}

TEST(EmpiricalProblem, InconsistentBlocksRejected) {
  Rng rng(50);
  EXPECT_THROW(make_empirical_data({random_matrix(10, 3, rng), random_matrix(9, 2, rng)}),
               DimensionError);
  EXPECT_THROW(make_empirical_data({}), std::invalid_argument);
}

TEST(EmpiricalProblem, IdenticalSeedsGiveIdenticalStreams) {
  Rng rng(51);
  testing::EmpiricalFixture fx = testing::make_cross_fixture(rng, 40, 3, 3);
  EmpiricalOptions options;
  options.batch_size = 9;
  Matrix x = random_matrix(fx.n, 2, rng);

  auto stream = [&](std::uint64_t seed) {
    StochasticProblem problem =
        empirical_problem_from_data(fx.data, fx.factory, fx.exact, options);
    Rng draw_rng(seed);
    std::vector<std::string> tags;
    std::vector<Matrix> actions;
    for (int b = 0; b < 12; ++b) {
      SamplePair pair = draw_sample_pair(problem, draw_rng);
      tags.push_back(pair.constraint.descriptor);
      actions.push_back(pair.constraint.apply(x));
    }
    return std::make_pair(tags, actions);
  };

  auto [tags_a, actions_a] = stream(123);
  auto [tags_b, actions_b] = stream(123);
  EXPECT_EQ(tags_a, tags_b);
  for (size_t i = 0; i < actions_a.size(); ++i) EXPECT_EQ(actions_a[i], actions_b[i]);
  auto [tags_c, actions_c] = stream(124);
  EXPECT_NE(tags_a, tags_c);
}

TEST(ConstraintSampleContracts, SelfAdjointAndPsd) {
  Rng rng(52);
  testing::EmpiricalFixture fx = testing::make_cross_fixture(rng, 20, 4, 2);
  EmpiricalOptions options;
  options.batch_size = 5;
  StochasticProblem problem =
      empirical_problem_from_data(fx.data, fx.factory, fx.exact, options);
  Rng draw_rng(3);
  for (int b = 0; b < 4; ++b) {
    ConstraintSample s = problem.draw_constraint(draw_rng);
    Matrix x1 = random_matrix(fx.n, 2, rng);
    Matrix x2 = random_matrix(fx.n, 2, rng);
    const Matrix mx1 = s.apply(x1);
    EXPECT_NEAR(((mx1.transpose() * x2) - (x1.transpose() * s.apply(x2))).norm(), 0.0, 1e-10);
    EXPECT_GE((x1.transpose() * mx1).trace(), -1e-10);
  }
}

}  // namespace
}  // namespace gstiefel
