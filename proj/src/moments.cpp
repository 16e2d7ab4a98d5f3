#include "mlqc/moments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "mlqc/errors.hpp"
#include "mlqc/linalg.hpp"

namespace mlqc {

namespace {

using MatrixXld = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using VectorXld = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

template <typename Fn>
void for_each_lift(const AugmentedClosedLoop& aug, Fn&& fn) {
  for (const auto& lift : aug.liftsA) fn(lift);
  for (const auto& lift : aug.liftsB) fn(lift);
  for (const auto& lift : aug.liftsC) fn(lift);
}

std::string format_radius(double radius) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", radius);
  return buf;
}

// I − Ψ (or I − Γ) assembled entirely in long double.
MatrixXld extended_lyapunov_system(const AugmentedClosedLoop& aug,
                                   MomentSide side) {
  const bool value = side == MomentSide::kValue;
  auto oriented = [value](const MatrixXd& M) -> MatrixXld {
    return value ? MatrixXld(M.transpose().cast<long double>())
                 : MatrixXld(M.cast<long double>());
  };
  const Eigen::Index d = aug.dim();
  MatrixXld system = MatrixXld::Identity(d * d, d * d);
  auto subtract_kron = [&](const MatrixXld& X, long double weight) {
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        if (X(i, j) == 0.0L) continue;
        system.block(i * d, j * d, d, d) -= (weight * X(i, j)) * X;
      }
    }
  };
  subtract_kron(oriented(aug.Phi), 1.0L);
  for_each_lift(aug, [&](const Lift& lift) {
    subtract_kron(oriented(lift.matrix),
                  static_cast<long double>(lift.variance));
  });
  return system;
}

}  // namespace

ValueCovarianceTuple ValueCovarianceTuple::zero(int n) {
  const MatrixXd z = MatrixXd::Zero(n, n);
  return {z, z, z, z};
}

double ValueCovarianceTuple::max_block_norm() const {
  return std::max({P.norm(), Phat.norm(), S.norm(), Shat.norm()});
}

double block_distance(const ValueCovarianceTuple& a,
                      const ValueCovarianceTuple& b) {
  return std::max({(a.P - b.P).norm(), (a.Phat - b.Phat).norm(),
                   (a.S - b.S).norm(), (a.Shat - b.Shat).norm()});
}

AugmentedClosedLoop build_augmented(const ProblemInstance& problem,
                                    const Controller& ctrl) {
  check_dimensions(problem, ctrl);
  const auto& sys = problem.system;
  const int n = sys.n, m = sys.m, p = sys.p;

  AugmentedClosedLoop aug;
  aug.Phi.resize(2 * n, 2 * n);
  aug.Phi << sys.A, sys.B * ctrl.K, ctrl.L * sys.C, ctrl.F;

  MatrixXd input_map = MatrixXd::Zero(n + m, 2 * n);
  input_map.topLeftCorner(n, n).setIdentity();
  input_map.bottomRightCorner(m, n) = ctrl.K;
  aug.Qprime = symmetrize(input_map.transpose() * problem.cost.Q * input_map);

  MatrixXd noise_map = MatrixXd::Zero(2 * n, n + p);
  noise_map.topLeftCorner(n, n).setIdentity();
  noise_map.bottomRightCorner(n, p) = ctrl.L;
  aug.Wprime = symmetrize(noise_map * problem.noise.W * noise_map.transpose());

  for (const auto& term : sys.noiseA) {
    MatrixXd lift = MatrixXd::Zero(2 * n, 2 * n);
    lift.topLeftCorner(n, n) = term.pattern;
    aug.liftsA.push_back({term.variance(), std::move(lift)});
  }
  for (const auto& term : sys.noiseB) {
    MatrixXd lift = MatrixXd::Zero(2 * n, 2 * n);
    lift.topRightCorner(n, n) = term.pattern * ctrl.K;
    aug.liftsB.push_back({term.variance(), std::move(lift)});
  }
  for (const auto& term : sys.noiseC) {
    MatrixXd lift = MatrixXd::Zero(2 * n, 2 * n);
    lift.bottomLeftCorner(n, n) = ctrl.L * term.pattern;
    aug.liftsC.push_back({term.variance(), std::move(lift)});
  }
  return aug;
}

SecondMomentOperator build_second_moment_matrix(const AugmentedClosedLoop& aug,
                                                MomentSide side) {
  const bool value = side == MomentSide::kValue;
  auto oriented = [value](const MatrixXd& M) -> MatrixXd {
    return value ? MatrixXd(M.transpose()) : M;
  };
  const MatrixXd phi = oriented(aug.Phi);
  SecondMomentOperator op{kron(phi, phi), side};
  for_each_lift(aug, [&](const Lift& lift) {
    const MatrixXd d = oriented(lift.matrix);
    op.matrix += lift.variance * kron(d, d);
  });
  return op;
}

MatrixXd apply_second_moment(const AugmentedClosedLoop& aug, const MatrixXd& M,
                             MomentSide side) {
  if (side == MomentSide::kValue) {
    MatrixXd out = aug.Phi.transpose() * M * aug.Phi;
    for_each_lift(aug, [&](const Lift& lift) {
      out += lift.variance * (lift.matrix.transpose() * M * lift.matrix);
    });
    return out;
  }
  MatrixXd out = aug.Phi * M * aug.Phi.transpose();
  for_each_lift(aug, [&](const Lift& lift) {
    out += lift.variance * (lift.matrix * M * lift.matrix.transpose());
  });
  return out;
}

double spectral_radius(const MatrixXd& matrix) {
  if (matrix.size() == 0) return 0.0;
  if (!matrix.allFinite()) {
    throw Error(ErrorCode::kEigenFailure, "matrix has non-finite entries");
  }
  Eigen::EigenSolver<MatrixXd> eig(matrix, /*computeEigenvectors=*/false);
  if (eig.info() != Eigen::Success) {
    throw Error(ErrorCode::kEigenFailure, "eigenvalue iteration did not converge");
  }
  const double radius = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (!std::isfinite(radius)) {
    throw Error(ErrorCode::kEigenFailure, "spectral radius is not finite");
  }
  return radius;
}

double spectral_radius(const SecondMomentOperator& op) {
  return spectral_radius(op.matrix);
}

StabilityCheck is_ms_stable(const AugmentedClosedLoop& aug) {
  const double radius =
      spectral_radius(build_second_moment_matrix(aug, MomentSide::kValue));
  return {radius < 1.0 - kMsStabilityMargin, radius};
}

MatrixXd solve_lyapunov(const AugmentedClosedLoop& aug, MomentSide side) {
  const SecondMomentOperator op = build_second_moment_matrix(aug, side);
  const double radius = spectral_radius(op);
  if (!(radius < 1.0 - kMsStabilityMargin)) {
    throw Error(ErrorCode::kNotMsStable,
                "spectral radius " + format_radius(radius) + " >= 1");
  }
  const MatrixXd& rhs =
      side == MomentSide::kValue ? aug.Qprime : aug.Wprime;
  const Eigen::Index dim = aug.dim();

  const MatrixXld system = extended_lyapunov_system(aug, side);
  const VectorXld b = vec(rhs).cast<long double>();
  const VectorXld x = system.partialPivLu().solve(b);

  const MatrixXd solution =
      symmetrize(unvec(x.cast<double>(), dim, dim));

  const MatrixXd residual =
      solution - (apply_second_moment(aug, solution, side) + rhs);
  if (!solution.allFinite() ||
      residual.norm() > kLyapunovResidualTol * (1.0 + solution.norm())) {
    throw Error(ErrorCode::kLyapunovResidual,
                "generalized Lyapunov residual " +
                    format_radius(residual.norm()) + " exceeds tolerance");
  }
  if (!is_psd(solution, kPsdOutputTol)) {
    throw Error(ErrorCode::kLyapunovResidual,
                "generalized Lyapunov solution is not positive semidefinite");
  }
  return solution;
}

double evaluate_cost(const AugmentedSolution& sol,
                     const AugmentedClosedLoop& aug) {
  const double value_side = frobenius_inner(sol.Pprime, aug.Wprime);
  const double covariance_side = frobenius_inner(sol.Sprime, aug.Qprime);
  if (std::abs(value_side - covariance_side) >
      kDualityTol * (1.0 + std::abs(value_side))) {
    throw Error(ErrorCode::kDualityViolation,
                "<P',W'> = " + format_radius(value_side) + " but <S',Q'> = " +
                    format_radius(covariance_side));
  }
  return value_side;
}

ValueCovarianceTuple extract_tuple(const AugmentedSolution& sol) {
  const Eigen::Index n = sol.Pprime.rows() / 2;
  const auto& Pp = sol.Pprime;
  const auto& Sp = sol.Sprime;
  ValueCovarianceTuple X;
  // [I I] P' [I I]ᵀ
  X.P = symmetrize(Pp.topLeftCorner(n, n) + Pp.topRightCorner(n, n) +
                   Pp.bottomLeftCorner(n, n) + Pp.bottomRightCorner(n, n));
  X.Phat = symmetrize(Pp.bottomRightCorner(n, n));
  // [I −I] S' [I −I]ᵀ
  X.S = symmetrize(Sp.topLeftCorner(n, n) - Sp.topRightCorner(n, n) -
                   Sp.bottomLeftCorner(n, n) + Sp.bottomRightCorner(n, n));
  X.Shat = symmetrize(Sp.bottomRightCorner(n, n));
  return X;
}

PolicyEvaluation evaluate_policy(const ProblemInstance& problem,
                                 const Controller& ctrl) {
  PolicyEvaluation eval;
  eval.aug = build_augmented(problem, ctrl);
  const StabilityCheck check = is_ms_stable(eval.aug);
  eval.radius = check.radius;
  if (!check.stable) {
    throw Error(ErrorCode::kNotMsStable,
                "spectral radius " + format_radius(check.radius) + " >= 1");
  }
  eval.solution.Pprime = solve_lyapunov(eval.aug, MomentSide::kValue);
  eval.solution.Sprime = solve_lyapunov(eval.aug, MomentSide::kCovariance);
  eval.cost = evaluate_cost(eval.solution, eval.aug);
  eval.duality_gap =
      std::abs(eval.cost -
               frobenius_inner(eval.solution.Sprime, eval.aug.Qprime)) /
      (1.0 + std::abs(eval.cost));
  eval.tuple = extract_tuple(eval.solution);
  return eval;
}

}  // namespace mlqc
