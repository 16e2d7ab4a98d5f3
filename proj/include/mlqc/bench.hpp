#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mlqc/errors.hpp"
#include "mlqc/model.hpp"
#include "mlqc/moments.hpp"
#include "mlqc/riccati.hpp"

namespace mlqc {

struct BenchConfig {
  std::vector<double> etas;
  int count = 1;
  std::uint64_t seed = 0;
  double tol = 1e-12;
  int max_iter = 0;  // 0 selects the per-method default
  std::vector<SolveMethod> methods = {SolveMethod::kPolicyIteration,
                                      SolveMethod::kValueIteration};
  int jobs = 1;

  /// Throws Error{kSchema} when an invariant is violated.
  void check() const;
};

/// Per-method convergence trace against the reference fixed point.
struct ConvergenceRecord {
  SolveMethod method = SolveMethod::kPolicyIteration;
  std::vector<double> errors;       // e^k, k = 0..iterations
  std::vector<double> cum_seconds;  // wall-clock at iterate k
  int iterations = 0;
  double final_residual = 0.0;
  double cost = 0.0;
  bool converged = false;
  /// Error name and message when the solve failed.
  std::optional<std::string> failure;
  std::optional<ErrorCode> failure_code;
  std::optional<SolveReport> report;
};

/// VI-to-PI ratios, present only when both methods converged.
struct ComparisonRatios {
  double iterations = 0.0;
  double seconds = 0.0;
};

struct ComparisonResult {
  std::vector<ConvergenceRecord> records;
  std::optional<ComparisonRatios> ratios;
  std::optional<ValueCovarianceTuple> reference;
};

/// Forward-Euler pendulum with control-dependent noise, σ_B scaled by eta.
ProblemInstance pendulum_problem(double eta);

struct RandomProblem {
  ProblemInstance problem;
  double eta = 0.0;
  /// The instance before the eta scaling: its open loop sits exactly on the
  /// ms-stability boundary.
  ProblemInstance calibrated;
  /// Factor applied to the drawn variances to reach the boundary.
  double variance_scale = 0.0;
};

inline constexpr int kRandomProblemMaxDraws = 100;

/// n=2, m=p=1, one noise term per matrix, open-loop ms-stable.
/// Throws Error{kRetryExhausted}.
RandomProblem random_problem(std::uint64_t seed);

/// Seed of instance `index` in a batch started from `batch_seed`.
std::uint64_t derive_instance_seed(std::uint64_t batch_seed,
                                   std::uint64_t index);

/// e^k = max over blocks of ‖M^k − M*‖_F / ‖M⁰ − M*‖_F. Blocks whose initial
/// error is ≤ 1e-300 contribute 0.
std::vector<double> convergence_metric(
    const std::vector<ValueCovarianceTuple>& history,
    const ValueCovarianceTuple& reference);

/// Highly accurate fixed point used to anchor e^k: policy iteration at
/// tol 1e-12 from `initial`, falling back to value iteration.
std::optional<ValueCovarianceTuple> reference_fixed_point(
    const ProblemInstance& problem, const Controller& initial);

/// Runs each configured method from the open-loop policy (policy iteration)
/// or X = 0 (value iteration). Solver failures are recorded, never thrown.
ComparisonResult run_comparison(const ProblemInstance& problem,
                                const BenchConfig& config);

struct InstanceResult {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  double eta = 0.0;
  ComparisonResult comparison;
  /// Set when the instance itself could not be generated.
  std::optional<std::string> generation_error;

  bool all_converged() const;
};

std::vector<InstanceResult> run_pendulum_bench(const BenchConfig& config);
std::vector<InstanceResult> run_random_bench(const BenchConfig& config);

/// seed,eta,method,iterations,wall_seconds,final_residual,cost_J,converged,
/// iteration_ratio,time_ratio,status
void write_summary_csv(std::ostream& out,
                       const std::vector<InstanceResult>& results);
/// seed,method,k,e_k,cum_seconds,eta
void write_trace_csv(std::ostream& out,
                     const std::vector<InstanceResult>& results);

struct RolloutEstimate {
  int horizon = 0;
  int trials = 0;
  std::uint64_t seed = 0;
  double cost_mean = 0.0;
  double cost_stderr = 0.0;
};

// State magnitudes beyond this abort a rollout.
inline constexpr double kRolloutOverflowGuard = 1e150;

/// Time-averaged stage cost over `horizon` steps, averaged over `trials`
/// independent Gaussian rollouts. Throws Error{kUnstableRollout} and
/// Error{kSchema} for nonpositive horizon or trials.
RolloutEstimate monte_carlo_cost(const ProblemInstance& problem,
                                 const Controller& ctrl, int horizon,
                                 int trials, std::uint64_t seed);

}  // namespace mlqc
