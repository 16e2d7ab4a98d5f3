#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mlqc/bench.hpp"
#include "mlqc/errors.hpp"
#include "mlqc/riccati.hpp"
#include "oracles.hpp"

namespace {

using mlqc::Error;
using mlqc::ErrorCode;
using mlqc::MatrixXd;
using mlqc::SolveMethod;
using mlqc::ValueCovarianceTuple;
using mlqc::testing::scalar_problem;

// Scalar a=0.5, b=c=1, Q=I, W=0.01·I, no multiplicative noise.
constexpr double kP = 1.1327822185373186;  // root of p² − p/4 − 1
constexpr double kPhat = 0.15916082004511675;
constexpr double kS = 0.01 * kP;
constexpr double kShat = 0.001591608200451167;
constexpr double kK = -0.5 * kP / (1.0 + kP);
constexpr double kL = 0.5 * kP / (1.0 + kP);
constexpr double kJstar = 0.013031677710988902;

mlqc::ProblemInstance scalar_noise_free() {
  return scalar_problem(0.5, 1.0, 1.0, 0.0, 0.01, 0.01);
}

ValueCovarianceTuple scalar_tuple(double p, double ph, double s, double sh) {
  return {MatrixXd::Constant(1, 1, p), MatrixXd::Constant(1, 1, ph),
          MatrixXd::Constant(1, 1, s), MatrixXd::Constant(1, 1, sh)};
}

ErrorCode solve_error(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kParse;
}

TEST(Gains, VanishingCrossTerms) {
  std::mt19937_64 rng(1);
  auto problem = mlqc::testing::random_small_problem(rng, 3, 2, 2, 0.5);
  problem.system.A.setZero();
  problem.cost.Q.topRightCorner(3, 2).setZero();
  problem.cost.Q.bottomLeftCorner(2, 3).setZero();
  problem.noise.W.topRightCorner(3, 2).setZero();
  problem.noise.W.bottomLeftCorner(2, 3).setZero();
  ValueCovarianceTuple X = ValueCovarianceTuple::zero(3);
  X.P = MatrixXd::Identity(3, 3);
  X.S = MatrixXd::Identity(3, 3);
  const auto gains = mlqc::gain_operators(X, problem);
  EXPECT_EQ(gains.K, MatrixXd::Zero(2, 3));
  EXPECT_EQ(gains.L, MatrixXd::Zero(3, 2));
}

TEST(Gains, ScalarFixedPoint) {
  const auto gains = mlqc::gain_operators(scalar_tuple(kP, kPhat, kS, kShat),
                                          scalar_noise_free());
  EXPECT_NEAR(gains.K(0, 0), -0.265564, 1e-6);
  EXPECT_NEAR(gains.L(0, 0), 0.265564, 1e-6);
  EXPECT_NEAR(gains.K(0, 0), kK, 1e-15);
  EXPECT_NEAR(gains.L(0, 0), kL, 1e-15);
}

TEST(Gains, SingularBlockRaises) {
  auto problem = scalar_noise_free();
  problem.cost.Q(1, 1) = 0.0;
  EXPECT_EQ(solve_error([&] {
              mlqc::gain_operators(ValueCovarianceTuple::zero(1), problem);
            }),
            ErrorCode::kSingularBlock);
  problem = scalar_noise_free();
  problem.noise.W(1, 1) = 0.0;
  EXPECT_EQ(solve_error([&] {
              mlqc::gain_operators(ValueCovarianceTuple::zero(1), problem);
            }),
            ErrorCode::kSingularBlock);
}

TEST(QOperators, AtZeroEqualWeights) {
  std::mt19937_64 rng(2);
  const auto problem = mlqc::testing::random_small_problem(rng, 2, 1, 1, 1.0);
  const auto X = ValueCovarianceTuple::zero(2);
  const auto q = mlqc::q_operators(X, problem, mlqc::gain_operators(X, problem));
  EXPECT_EQ(q.G, problem.cost.Q);
  EXPECT_EQ(q.H, problem.noise.W);
}

TEST(QOperators, NoiseFreeClassicalForm) {
  std::mt19937_64 rng(3);
  auto problem = mlqc::testing::random_small_problem(rng, 2, 2, 1, 1.0);
  problem.system.noiseA.clear();
  problem.system.noiseB.clear();
  problem.system.noiseC.clear();
  std::normal_distribution<double> normal;
  ValueCovarianceTuple X = ValueCovarianceTuple::zero(2);
  for (MatrixXd* M : {&X.P, &X.Phat, &X.S, &X.Shat}) {
    MatrixXd R(2, 2);
    for (Eigen::Index i = 0; i < 4; ++i) R(i) = normal(rng);
    *M = R * R.transpose();
  }
  const auto& sys = problem.system;
  const auto q = mlqc::q_operators(X, problem, mlqc::gain_operators(X, problem));
  MatrixXd AB(2, 4), AC(3, 2);
  AB << sys.A, sys.B;
  AC << sys.A, sys.C;
  const MatrixXd G = problem.cost.Q + AB.transpose() * X.P * AB;
  const MatrixXd H = problem.noise.W + AC * X.S * AC.transpose();
  EXPECT_TRUE(q.G.isApprox(G, 1e-13));
  EXPECT_TRUE(q.H.isApprox(H, 1e-13));
}

TEST(QOperators, ScalarStateNoiseTerm) {
  const auto problem = scalar_problem(0.5, 1.0, 1.0, 0.3, 0.01, 0.01);
  const mlqc::GainPair zero{MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1)};
  const auto q =
      mlqc::q_operators(scalar_tuple(1.0, 1.0, 0.0, 0.0), problem, zero);
  EXPECT_NEAR(q.Gxx()(0, 0), 1.43, 1e-15);
}

TEST(Residual, AtZero) {
  std::mt19937_64 rng(4);
  auto problem = mlqc::testing::random_small_problem(rng, 2, 1, 1, 1.0);
  problem.cost.Q = MatrixXd::Identity(3, 3);
  problem.noise.W = 0.01 * MatrixXd::Identity(3, 3);
  const auto R = mlqc::riccati_residual(ValueCovarianceTuple::zero(2), problem);
  EXPECT_TRUE(R.P.isApprox(MatrixXd::Identity(2, 2)));
  EXPECT_EQ(R.Phat, MatrixXd::Zero(2, 2));
  EXPECT_TRUE(R.S.isApprox(0.01 * MatrixXd::Identity(2, 2)));
  EXPECT_EQ(R.Shat, MatrixXd::Zero(2, 2));

  const auto X1 =
      mlqc::value_iteration_step(ValueCovarianceTuple::zero(2), problem);
  EXPECT_TRUE(X1.P.isApprox(MatrixXd::Identity(2, 2)));
  EXPECT_TRUE(X1.S.isApprox(0.01 * MatrixXd::Identity(2, 2)));
  EXPECT_EQ(X1.Phat.norm(), 0.0);
  EXPECT_EQ(X1.Shat.norm(), 0.0);
}

TEST(Residual, VanishesAtScalarClosedForm) {
  const auto X = scalar_tuple(kP, kPhat, kS, kShat);
  const auto problem = scalar_noise_free();
  EXPECT_LE(mlqc::riccati_residual(X, problem).max_block_norm(), 1e-9);
  const auto next = mlqc::value_iteration_step(X, problem);
  EXPECT_LE(mlqc::block_distance(next, X), 1e-9);
}

TEST(ValueIteration, ScalarNoiseFree) {
  const auto report = mlqc::value_iteration_solve(scalar_noise_free());
  ASSERT_TRUE(report.converged);
  EXPECT_EQ(report.method, SolveMethod::kValueIteration);
  EXPECT_NEAR(report.tuple.P(0, 0), kP, 1e-10);
  EXPECT_NEAR(report.tuple.Phat(0, 0), kPhat, 1e-10);
  EXPECT_NEAR(report.tuple.S(0, 0), kS, 1e-12);
  EXPECT_NEAR(report.tuple.Shat(0, 0), kShat, 1e-12);
  EXPECT_NEAR(report.gains.K(0, 0), kK, 1e-10);
  EXPECT_NEAR(report.gains.L(0, 0), kL, 1e-10);
  EXPECT_NEAR(report.cost, kJstar, 1e-12);
  EXPECT_LE(report.residual_norm, 1e-9);
  EXPECT_LE(report.final_delta, 1e-12);
  EXPECT_EQ(static_cast<int>(report.history.size()), report.iterations + 1);
  EXPECT_TRUE(std::isinf(report.history.front().delta));
}

TEST(ValueIteration, DivergesWhenNotCompensatable) {
  const auto problem = scalar_problem(2.0, 1.0, 1.0, 10.0, 0.01, 0.01);
  EXPECT_EQ(solve_error([&] { mlqc::value_iteration_solve(problem); }),
            ErrorCode::kDiverged);
}

TEST(ValueIteration, IterationCap) {
  mlqc::SolverOptions options;
  options.max_iter = 2;
  EXPECT_EQ(solve_error([&] {
              mlqc::value_iteration_solve(scalar_noise_free(), options);
            }),
            ErrorCode::kMaxIterationsExceeded);
}

TEST(ValueIteration, PendulumWithoutNoiseMatchesDecoupledOracle) {
  const auto problem = mlqc::pendulum_problem(0.0);
  const auto oracle = mlqc::testing::decoupled_riccati(problem);
  ASSERT_TRUE(oracle.converged);
  const auto report = mlqc::value_iteration_solve(problem);
  ASSERT_TRUE(report.converged);
  EXPECT_LE((report.tuple.P - oracle.P).norm(), 1e-8 * (1 + oracle.P.norm()));
  EXPECT_LE((report.tuple.S - oracle.S).norm(), 1e-8 * (1 + oracle.S.norm()));
  EXPECT_LE((report.gains.K - oracle.K).norm(), 1e-8);
  EXPECT_LE((report.gains.L - oracle.L).norm(), 1e-8);
}

TEST(PolicyIteration, ScalarNoiseFree) {
  const auto problem = scalar_noise_free();
  const auto report = mlqc::policy_iteration_solve(
      problem, mlqc::open_loop_controller(problem));
  ASSERT_TRUE(report.converged);
  EXPECT_EQ(report.method, SolveMethod::kPolicyIteration);
  EXPECT_NEAR(report.gains.K(0, 0), kK, 1e-10);
  EXPECT_NEAR(report.gains.L(0, 0), kL, 1e-10);
  EXPECT_NEAR(report.tuple.Phat(0, 0), kPhat, 1e-10);
  EXPECT_NEAR(report.cost, kJstar, 1e-12);
  EXPECT_LE(report.final_delta, 1e-12);
  ASSERT_TRUE(report.history.front().cost.has_value());
  EXPECT_GE(*report.history.front().cost, report.cost);
}

TEST(PolicyIteration, RejectsNonStabilizingStart) {
  const auto problem = mlqc::pendulum_problem(1.0);
  mlqc::Controller ctrl = mlqc::open_loop_controller(problem);
  ctrl.F = 2.0 * MatrixXd::Identity(2, 2);
  try {
    mlqc::policy_iteration_solve(problem, ctrl);
    FAIL() << "expected InitialPolicyNotStabilizing";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInitialPolicyNotStabilizing);
    ASSERT_TRUE(e.iteration().has_value());
    EXPECT_EQ(*e.iteration(), 0);
  }
}

TEST(PolicyIteration, ReportsDestabilizingIterate) {
  // An instance where the first improved policy leaves the ms-stable set.
  const auto instance =
      mlqc::random_problem(mlqc::derive_instance_seed(42, 56)).problem;
  try {
    mlqc::policy_iteration_solve(instance,
                                 mlqc::open_loop_controller(instance));
    FAIL() << "expected IterateNotStabilizing";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIterateNotStabilizing);
    ASSERT_TRUE(e.iteration().has_value());
    EXPECT_GE(*e.iteration(), 1);
  }
}

TEST(Solve, DispatchAndMethodNames) {
  EXPECT_EQ(mlqc::parse_method("pi"), SolveMethod::kPolicyIteration);
  EXPECT_EQ(mlqc::parse_method("value_iteration"), SolveMethod::kValueIteration);
  EXPECT_FALSE(mlqc::parse_method("newton").has_value());
  mlqc::SolverOptions options;
  EXPECT_EQ(options.effective_max_iter(SolveMethod::kValueIteration),
            mlqc::kDefaultMaxIterVI);
  EXPECT_EQ(options.effective_max_iter(SolveMethod::kPolicyIteration),
            mlqc::kDefaultMaxIterPI);

  const auto problem = scalar_noise_free();
  const auto vi = mlqc::solve(problem, SolveMethod::kValueIteration,
                              mlqc::open_loop_controller(problem), options);
  EXPECT_EQ(vi.method, SolveMethod::kValueIteration);
}

TEST(OptimalCost, ScalarFormsAgree) {
  const auto problem = scalar_noise_free();
  const auto X = scalar_tuple(kP, kPhat, kS, kShat);
  const auto K = MatrixXd::Constant(1, 1, kK);
  const auto L = MatrixXd::Constant(1, 1, kL);
  const double control = mlqc::optimal_cost_control_form(X, K, problem);
  const double estimation = mlqc::optimal_cost_estimation_form(X, L, problem);
  EXPECT_NEAR(control, estimation, 1e-12);
  EXPECT_NEAR(mlqc::optimal_cost(X, K, L, problem), kJstar, 1e-12);
}

TEST(OptimalCost, DegenerateCases) {
  auto problem = scalar_noise_free();
  const auto X = scalar_tuple(2.0, 1.0, 0.3, 0.2);
  EXPECT_DOUBLE_EQ(
      mlqc::optimal_cost_control_form(X, MatrixXd::Zero(1, 1), problem), 0.5);
  problem.noise.W.setZero();
  EXPECT_EQ(mlqc::optimal_cost_estimation_form(X, MatrixXd::Constant(1, 1, 0.4),
                                               problem),
            0.0);
  EXPECT_EQ(solve_error([&] {
              mlqc::optimal_cost(X, MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1),
                                 problem);
            }),
            ErrorCode::kDualityViolation);
}

// Randomized properties over the seeded generator's instances.

struct BothSolves {
  std::optional<mlqc::SolveReport> pi;
  std::optional<mlqc::SolveReport> vi;
};

BothSolves solve_both(const mlqc::ProblemInstance& problem) {
  BothSolves out;
  try {
    out.pi = mlqc::policy_iteration_solve(problem,
                                          mlqc::open_loop_controller(problem));
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIterateNotStabilizing) << e.what();
  }
  out.vi = mlqc::value_iteration_solve(problem);
  return out;
}

TEST(Property, FixedPointEquivalenceAndCertificates) {
  int compared = 0;
  for (std::uint64_t i = 0; i < 12; ++i) {
    const auto problem =
        mlqc::random_problem(mlqc::derive_instance_seed(2024, i)).problem;
    const auto both = solve_both(problem);
    ASSERT_TRUE(both.vi && both.vi->converged);
    EXPECT_LE(both.vi->residual_norm, 1e-9);
    if (!both.pi) continue;
    ++compared;
    EXPECT_LE(both.pi->residual_norm, 1e-9);
    const double scale = 1.0 + both.vi->tuple.max_block_norm();
    EXPECT_LE(mlqc::block_distance(both.pi->tuple, both.vi->tuple),
              1e-8 * scale);
    EXPECT_LE((both.pi->gains.K - both.vi->gains.K).norm(), 1e-8 * scale);
    EXPECT_LE((both.pi->gains.L - both.vi->gains.L).norm(), 1e-8 * scale);
    EXPECT_NEAR(both.pi->cost, both.vi->cost, 1e-9 * (1 + both.vi->cost));
  }
  EXPECT_GE(compared, 10);
}

TEST(Property, GainConsistencyAndSymmetricIterates) {
  for (std::uint64_t i = 0; i < 6; ++i) {
    const auto problem =
        mlqc::random_problem(mlqc::derive_instance_seed(7, i)).problem;
    const auto both = solve_both(problem);
    for (const auto* report : {both.pi ? &*both.pi : nullptr, &*both.vi}) {
      if (!report) continue;
      const auto gains = mlqc::gain_operators(report->tuple, problem);
      EXPECT_EQ(gains.K, report->gains.K);
      EXPECT_EQ(gains.L, report->gains.L);
      const auto expected = mlqc::certainty_equivalent_controller(
          problem, gains.K, gains.L);
      EXPECT_EQ(report->controller.F, expected.F);
      for (const auto& rec : report->history) {
        ASSERT_TRUE(rec.tuple.has_value());
        for (const MatrixXd* M :
             {&rec.tuple->P, &rec.tuple->Phat, &rec.tuple->S, &rec.tuple->Shat}) {
          EXPECT_EQ(*M, M->transpose());
        }
      }
    }
  }
}

TEST(Property, NoiseFreeReducesToDecoupledRiccati) {
  std::mt19937_64 rng(555);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 1 + trial % 3;
    auto problem = mlqc::testing::random_small_problem(rng, n, 1 + trial % 2,
                                                       1 + (trial + 1) % 2, 0.0);
    problem.system.noiseA.clear();
    problem.system.noiseB.clear();
    problem.system.noiseC.clear();
    problem.system.A *=
        0.8 / problem.system.A.eigenvalues().cwiseAbs().maxCoeff();
    const auto oracle = mlqc::testing::decoupled_riccati(problem);
    ASSERT_TRUE(oracle.converged);
    const auto pi = mlqc::policy_iteration_solve(
        problem, mlqc::open_loop_controller(problem));
    const auto vi = mlqc::value_iteration_solve(problem);
    for (const auto* report : {&pi, &vi}) {
      const double scale = 1.0 + oracle.P.norm();
      EXPECT_LE((report->tuple.P - oracle.P).norm(), 1e-8 * scale);
      EXPECT_LE((report->tuple.S - oracle.S).norm(),
                1e-8 * (1.0 + oracle.S.norm()));
      EXPECT_LE((report->gains.K - oracle.K).norm(), 1e-8 * scale);
      EXPECT_LE((report->gains.L - oracle.L).norm(), 1e-8 * scale);
    }
  }
}

}  // namespace
