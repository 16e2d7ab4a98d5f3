#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mlqc/model.hpp"
#include "mlqc/moments.hpp"

namespace mlqc {

/// Q-function operators G(X) over (x, u) and H(X) over (x, y).
struct QFunctionPair {
  MatrixXd G;
  MatrixXd H;
  int n = 0;
  int m = 0;
  int p = 0;

  auto Gxx() const { return G.topLeftCorner(n, n); }
  auto Gxu() const { return G.topRightCorner(n, m); }
  auto Gux() const { return G.bottomLeftCorner(m, n); }
  auto Guu() const { return G.bottomRightCorner(m, m); }
  auto Hxx() const { return H.topLeftCorner(n, n); }
  auto Hxy() const { return H.topRightCorner(n, p); }
  auto Hyx() const { return H.bottomLeftCorner(p, n); }
  auto Hyy() const { return H.bottomRightCorner(p, p); }
};

struct GainPair {
  MatrixXd K;  // m×n
  MatrixXd L;  // n×p
};

/// One block per row of the coupled Riccati operator R(X).
struct RiccatiResidual {
  MatrixXd P;
  MatrixXd Phat;
  MatrixXd S;
  MatrixXd Shat;

  double max_block_norm() const;
};

// G_uu and H_yy are treated as singular beyond this condition estimate.
inline constexpr double kMaxBlockCondition = 1e12;
// Any tuple block above this norm means the iteration is diverging.
inline constexpr double kDivergenceGuard = 1e100;

/// K(X) = −G_uu⁻¹ G_ux and L(X) = H_xy H_yy⁻¹ from the gain-independent
/// blocks. Throws Error{kSingularBlock}.
GainPair gain_operators(const ValueCovarianceTuple& X,
                        const ProblemInstance& problem);

/// Full G(X), H(X) with the supplied gains in the xx blocks.
QFunctionPair q_operators(const ValueCovarianceTuple& X,
                          const ProblemInstance& problem,
                          const GainPair& gains);

RiccatiResidual riccati_residual(const ValueCovarianceTuple& X,
                                 const ProblemInstance& problem);

/// X + R(X).
ValueCovarianceTuple value_iteration_step(const ValueCovarianceTuple& X,
                                          const ProblemInstance& problem);

enum class SolveMethod { kPolicyIteration, kValueIteration };

std::string_view to_string(SolveMethod method);
/// Accepts "pi"/"vi" and the long names.
std::optional<SolveMethod> parse_method(std::string_view text);

struct SolverOptions {
  double tol = 1e-12;
  int max_iter = 0;  // 0 selects the per-method default
  /// Keep X^k for every iterate (needed for the e^k trace).
  bool record_tuples = true;

  int effective_max_iter(SolveMethod method) const;
};

inline constexpr int kDefaultMaxIterVI = 100000;
inline constexpr int kDefaultMaxIterPI = 1000;

struct IterationRecord {
  int k = 0;
  /// Blockwise max Frobenius distance to the previous iterate; +inf at k = 0.
  double delta = 0.0;
  /// Monotonic wall-clock seconds since the solve started.
  double seconds = 0.0;
  /// Only for policy iteration: cost and relative duality gap of policy k.
  std::optional<double> cost;
  std::optional<double> duality_gap;
  /// Filled in by the benchmark once the reference fixed point is known.
  std::optional<double> error;
  std::optional<ValueCovarianceTuple> tuple;
};

struct SolveReport {
  Controller controller;
  GainPair gains;
  ValueCovarianceTuple tuple;
  double cost = 0.0;
  /// |⟨P',W'⟩ − ⟨S',Q'⟩| / (1 + |J|) of the reported controller.
  double cost_duality_gap = 0.0;
  int iterations = 0;
  double residual_norm = 0.0;
  double final_delta = 0.0;
  double tol = 0.0;
  std::vector<IterationRecord> history;
  SolveMethod method = SolveMethod::kPolicyIteration;
  bool converged = false;
  double wall_seconds = 0.0;
};

/// Iterates X ← X + R(X) from X = 0 until the blockwise step is ≤ tol.
/// Throws Error{kMaxIterationsExceeded, kDiverged, kSingularBlock}.
SolveReport value_iteration_solve(const ProblemInstance& problem,
                                  const SolverOptions& options = {});

/// Alternates exact policy evaluation (generalized Lyapunov solves) and
/// policy improvement through the gain operators. The initial compensator
/// must be ms-stabilizing. Throws Error{kInitialPolicyNotStabilizing,
/// kIterateNotStabilizing, kMaxIterationsExceeded, kSingularBlock}.
SolveReport policy_iteration_solve(const ProblemInstance& problem,
                                   const Controller& initial,
                                   const SolverOptions& options = {});

SolveReport solve(const ProblemInstance& problem, SolveMethod method,
                  const Controller& initial, const SolverOptions& options);

/// ⟨Q_xx, S⟩ + ⟨[I; K]ᵀ Q [I; K], Ŝ⟩.
double optimal_cost_control_form(const ValueCovarianceTuple& X,
                                 const MatrixXd& K,
                                 const ProblemInstance& problem);
/// ⟨W_xx, P⟩ + ⟨[I −L] W [I −L]ᵀ, P̂⟩.
double optimal_cost_estimation_form(const ValueCovarianceTuple& X,
                                    const MatrixXd& L,
                                    const ProblemInstance& problem);
/// Control form, checked against the estimation form to kDualityTol
/// relative. Throws Error{kDualityViolation}.
double optimal_cost(const ValueCovarianceTuple& X, const MatrixXd& K,
                    const MatrixXd& L, const ProblemInstance& problem);

}  // namespace mlqc
