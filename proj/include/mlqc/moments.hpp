#pragma once

#include <vector>

#include <Eigen/Dense>

#include "mlqc/model.hpp"

namespace mlqc {

/// A multiplicative-noise direction of the 2n-dimensional closed loop, paired
/// with its variance σ².
struct Lift {
  double variance = 0.0;
  MatrixXd matrix;
};

/// Closed loop of a problem under a compensator, on the stacked state
/// (x, x̂):
///   Phi = [[A, BK], [LC, F]],  Q' = [I 0; 0 K]ᵀ Q [I 0; 0 K],
///   W' = [I 0; 0 L] W [I 0; 0 L]ᵀ.
/// Noise lifts are [[AΔ,0],[0,0]], [[0,BΔK],[0,0]] and [[0,0],[LCΔ,0]].
struct AugmentedClosedLoop {
  MatrixXd Phi;
  MatrixXd Qprime;
  MatrixXd Wprime;
  std::vector<Lift> liftsA;
  std::vector<Lift> liftsB;
  std::vector<Lift> liftsC;

  Eigen::Index dim() const { return Phi.rows(); }
};

/// Which second-moment map: the value side M ↦ E[Φ'ᵀ M Φ'] (Ψ) or the
/// covariance side N ↦ E[Φ' N Φ'ᵀ] (Γ).
enum class MomentSide { kValue, kCovariance };

struct SecondMomentOperator {
  MatrixXd matrix;
  MomentSide side = MomentSide::kValue;
};

struct AugmentedSolution {
  MatrixXd Pprime;
  MatrixXd Sprime;
};

/// X = (P, P̂, S, Ŝ).
struct ValueCovarianceTuple {
  MatrixXd P;
  MatrixXd Phat;
  MatrixXd S;
  MatrixXd Shat;

  static ValueCovarianceTuple zero(int n);
  /// max over the four blocks of the Frobenius norm.
  double max_block_norm() const;
};

/// max over blocks of ‖a_i − b_i‖_F.
double block_distance(const ValueCovarianceTuple& a,
                      const ValueCovarianceTuple& b);

struct StabilityCheck {
  bool stable = false;
  double radius = 0.0;
};

// A closed loop counts as ms-stable when ρ(Ψ) < 1 − kMsStabilityMargin.
inline constexpr double kMsStabilityMargin = 1e-9;
inline constexpr double kLyapunovResidualTol = 1e-10;
inline constexpr double kPsdOutputTol = 1e-8;
inline constexpr double kDualityTol = 1e-9;

AugmentedClosedLoop build_augmented(const ProblemInstance& problem,
                                    const Controller& ctrl);

SecondMomentOperator build_second_moment_matrix(const AugmentedClosedLoop& aug,
                                                MomentSide side);

/// Applies the second-moment map directly as a sum of congruences; the
/// Kronecker matrix is never formed.
MatrixXd apply_second_moment(const AugmentedClosedLoop& aug, const MatrixXd& M,
                             MomentSide side);

double spectral_radius(const MatrixXd& matrix);
double spectral_radius(const SecondMomentOperator& op);

StabilityCheck is_ms_stable(const AugmentedClosedLoop& aug);

/// Solves P' = Ψ(P') + Q' (value side) or S' = Γ(S') + W' (covariance side).
/// Throws Error{kNotMsStable} when the closed loop is not ms-stable.
MatrixXd solve_lyapunov(const AugmentedClosedLoop& aug, MomentSide side);

/// ⟨P', W'⟩, checked against ⟨S', Q'⟩. Throws Error{kDualityViolation}.
double evaluate_cost(const AugmentedSolution& sol,
                     const AugmentedClosedLoop& aug);

ValueCovarianceTuple extract_tuple(const AugmentedSolution& sol);

/// Everything policy evaluation produces for one compensator.
struct PolicyEvaluation {
  AugmentedClosedLoop aug;
  AugmentedSolution solution;
  ValueCovarianceTuple tuple;
  double radius = 0.0;
  double cost = 0.0;
  /// |⟨P',W'⟩ − ⟨S',Q'⟩| / (1 + |J|).
  double duality_gap = 0.0;
};

/// Builds the closed loop, checks ms-stability, solves both Lyapunov
/// equations and extracts X. Throws Error{kNotMsStable} or
/// Error{kDualityViolation}.
PolicyEvaluation evaluate_policy(const ProblemInstance& problem,
                                 const Controller& ctrl);

}  // namespace mlqc
