#include "mlqc/riccati.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "mlqc/errors.hpp"
#include "mlqc/linalg.hpp"

namespace mlqc {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Gain-independent blocks shared by K(X), L(X) and the full G, H.
struct CoreBlocks {
  MatrixXd Gux;
  MatrixXd Guu;
  MatrixXd Hxy;
  MatrixXd Hyy;
};

CoreBlocks core_blocks(const ValueCovarianceTuple& X,
                       const ProblemInstance& problem) {
  const auto& sys = problem.system;
  CoreBlocks b;
  b.Gux = problem.Qux() + sys.B.transpose() * X.P * sys.A;
  b.Guu = problem.Quu() + sys.B.transpose() * X.P * sys.B;
  const MatrixXd P_total = X.P + X.Phat;
  for (const auto& t : sys.noiseB) {
    b.Guu += t.variance() * (t.pattern.transpose() * P_total * t.pattern);
  }
  b.Guu = symmetrize(b.Guu);

  b.Hxy = problem.Wxy() + sys.A * X.S * sys.C.transpose();
  b.Hyy = problem.Wyy() + sys.C * X.S * sys.C.transpose();
  const MatrixXd S_total = X.S + X.Shat;
  for (const auto& t : sys.noiseC) {
    b.Hyy += t.variance() * (t.pattern * S_total * t.pattern.transpose());
  }
  b.Hyy = symmetrize(b.Hyy);
  return b;
}

Eigen::PartialPivLU<MatrixXd> checked_lu(const MatrixXd& block,
                                         const char* name) {
  if (!block.allFinite()) {
    throw Error(ErrorCode::kSingularBlock,
                std::string(name) + " has non-finite entries");
  }
  Eigen::PartialPivLU<MatrixXd> lu(block);
  const double rcond = lu.rcond();
  if (!(rcond * kMaxBlockCondition >= 1.0)) {
    throw Error(ErrorCode::kSingularBlock,
                std::string(name) + " condition estimate exceeds 1e12");
  }
  return lu;
}

void check_finite_and_bounded(const ValueCovarianceTuple& X, int k) {
  const double norm = X.max_block_norm();
  if (!std::isfinite(norm) || norm > kDivergenceGuard) {
    throw Error(ErrorCode::kDiverged,
                "iterate norm exceeded 1e100 at iteration " + std::to_string(k),
                k);
  }
}

IterationRecord make_record(int k, double delta, Clock::time_point start,
                            const ValueCovarianceTuple& X,
                            const SolverOptions& options) {
  IterationRecord rec;
  rec.k = k;
  rec.delta = delta;
  rec.seconds = seconds_since(start);
  if (options.record_tuples) rec.tuple = X;
  return rec;
}

// Shared tail of both solvers: report the certainty-equivalent controller
// built from the gains at X* and evaluate it exactly.
void finalize(SolveReport& report, const ProblemInstance& problem,
              const ValueCovarianceTuple& X) {
  report.tuple = X;
  report.gains = gain_operators(X, problem);
  report.controller =
      certainty_equivalent_controller(problem, report.gains.K, report.gains.L);
  report.residual_norm = riccati_residual(X, problem).max_block_norm();
  const PolicyEvaluation eval = evaluate_policy(problem, report.controller);
  report.cost = eval.cost;
  report.cost_duality_gap = eval.duality_gap;
}

}  // namespace

double RiccatiResidual::max_block_norm() const {
  return std::max({P.norm(), Phat.norm(), S.norm(), Shat.norm()});
}

GainPair gain_operators(const ValueCovarianceTuple& X,
                        const ProblemInstance& problem) {
  const CoreBlocks b = core_blocks(X, problem);
  const auto Guu_lu = checked_lu(b.Guu, "G_uu");
  const auto Hyy_lu = checked_lu(b.Hyy, "H_yy");
  GainPair gains;
  gains.K = -Guu_lu.solve(b.Gux);
  // L = H_xy H_yy⁻¹, i.e. Lᵀ = H_yy⁻ᵀ H_xyᵀ with H_yy symmetric.
  gains.L = Hyy_lu.solve(b.Hxy.transpose()).transpose();
  return gains;
}

QFunctionPair q_operators(const ValueCovarianceTuple& X,
                          const ProblemInstance& problem,
                          const GainPair& gains) {
  const auto& sys = problem.system;
  const int n = sys.n, m = sys.m, p = sys.p;
  const CoreBlocks b = core_blocks(X, problem);
  const MatrixXd P_total = X.P + X.Phat;
  const MatrixXd S_total = X.S + X.Shat;

  MatrixXd Gxx = problem.Qxx() + sys.A.transpose() * X.P * sys.A;
  for (const auto& t : sys.noiseA) {
    Gxx += t.variance() * (t.pattern.transpose() * P_total * t.pattern);
  }
  for (const auto& t : sys.noiseC) {
    const MatrixXd LC = gains.L * t.pattern;
    Gxx += t.variance() * (LC.transpose() * X.Phat * LC);
  }
  const MatrixXd Gxu = problem.Qxu() + sys.A.transpose() * X.P * sys.B;

  MatrixXd Hxx = problem.Wxx() + sys.A * X.S * sys.A.transpose();
  for (const auto& t : sys.noiseA) {
    Hxx += t.variance() * (t.pattern * S_total * t.pattern.transpose());
  }
  for (const auto& t : sys.noiseB) {
    const MatrixXd BK = t.pattern * gains.K;
    Hxx += t.variance() * (BK * X.Shat * BK.transpose());
  }

  QFunctionPair q;
  q.n = n;
  q.m = m;
  q.p = p;
  q.G.resize(n + m, n + m);
  q.G << Gxx, Gxu, b.Gux, b.Guu;
  q.G = symmetrize(q.G);
  q.H.resize(n + p, n + p);
  q.H << Hxx, b.Hxy, problem.Wyx() + sys.C * X.S * sys.A.transpose(), b.Hyy;
  q.H = symmetrize(q.H);
  return q;
}

RiccatiResidual riccati_residual(const ValueCovarianceTuple& X,
                                 const ProblemInstance& problem) {
  const auto& sys = problem.system;
  const GainPair gains = gain_operators(X, problem);
  const QFunctionPair q = q_operators(X, problem, gains);

  const auto Guu_lu = checked_lu(q.Guu(), "G_uu");
  const auto Hyy_lu = checked_lu(q.Hyy(), "H_yy");
  const MatrixXd control_schur =
      symmetrize(q.Gxu() * Guu_lu.solve(MatrixXd(q.Gux())));
  const MatrixXd filter_schur =
      symmetrize(q.Hxy() * Hyy_lu.solve(MatrixXd(q.Hyx())));

  const MatrixXd estimator_loop = sys.A - gains.L * sys.C;
  const MatrixXd control_loop = sys.A + sys.B * gains.K;
  const MatrixXd E = estimator_loop.transpose() * X.Phat * estimator_loop;
  const MatrixXd F = control_loop * X.Shat * control_loop.transpose();

  RiccatiResidual r;
  r.P = symmetrize(-X.P + q.Gxx() - control_schur);
  r.Phat = symmetrize(-X.Phat + E + control_schur);
  r.S = symmetrize(-X.S + q.Hxx() - filter_schur);
  r.Shat = symmetrize(-X.Shat + F + filter_schur);
  return r;
}

ValueCovarianceTuple value_iteration_step(const ValueCovarianceTuple& X,
                                          const ProblemInstance& problem) {
  const RiccatiResidual r = riccati_residual(X, problem);
  return {symmetrize(X.P + r.P), symmetrize(X.Phat + r.Phat),
          symmetrize(X.S + r.S), symmetrize(X.Shat + r.Shat)};
}

std::string_view to_string(SolveMethod method) {
  return method == SolveMethod::kPolicyIteration ? "policy_iteration"
                                                 : "value_iteration";
}

std::optional<SolveMethod> parse_method(std::string_view text) {
  if (text == "pi" || text == "policy_iteration") {
    return SolveMethod::kPolicyIteration;
  }
  if (text == "vi" || text == "value_iteration") {
    return SolveMethod::kValueIteration;
  }
  return std::nullopt;
}

int SolverOptions::effective_max_iter(SolveMethod method) const {
  if (max_iter > 0) return max_iter;
  return method == SolveMethod::kValueIteration ? kDefaultMaxIterVI
                                                : kDefaultMaxIterPI;
}

SolveReport value_iteration_solve(const ProblemInstance& problem,
                                  const SolverOptions& options) {
  SolveReport report;
  report.method = SolveMethod::kValueIteration;
  report.tol = options.tol;
  const int max_iter = options.effective_max_iter(report.method);

  const auto start = Clock::now();
  ValueCovarianceTuple X = ValueCovarianceTuple::zero(problem.n());
  report.history.push_back(make_record(
      0, std::numeric_limits<double>::infinity(), start, X, options));

  for (int k = 1; k <= max_iter; ++k) {
    ValueCovarianceTuple next = value_iteration_step(X, problem);
    check_finite_and_bounded(next, k);
    const double delta = block_distance(next, X);
    X = std::move(next);
    report.history.push_back(make_record(k, delta, start, X, options));
    if (delta <= options.tol) {
      report.iterations = k;
      report.final_delta = delta;
      report.converged = true;
      report.wall_seconds = seconds_since(start);
      finalize(report, problem, X);
      return report;
    }
  }
  throw Error(ErrorCode::kMaxIterationsExceeded,
              "value iteration did not reach tol within " +
                  std::to_string(max_iter) + " iterations",
              max_iter);
}

SolveReport policy_iteration_solve(const ProblemInstance& problem,
                                   const Controller& initial,
                                   const SolverOptions& options) {
  check_dimensions(problem, initial);
  SolveReport report;
  report.method = SolveMethod::kPolicyIteration;
  report.tol = options.tol;
  const int max_iter = options.effective_max_iter(report.method);

  const auto start = Clock::now();
  auto evaluate = [&](const Controller& ctrl, int k) {
    try {
      return evaluate_policy(problem, ctrl);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNotMsStable) throw;
      if (k == 0) {
        throw Error(ErrorCode::kInitialPolicyNotStabilizing, e.what(), 0);
      }
      throw Error(ErrorCode::kIterateNotStabilizing,
                  "policy at iteration " + std::to_string(k) +
                      " is not ms-stabilizing (" + e.what() + ")",
                  k);
    }
  };
  auto record = [&](int k, double delta, const PolicyEvaluation& eval) {
    IterationRecord rec = make_record(k, delta, start, eval.tuple, options);
    rec.cost = eval.cost;
    rec.duality_gap = eval.duality_gap;
    report.history.push_back(std::move(rec));
  };

  PolicyEvaluation current = evaluate(initial, 0);
  record(0, std::numeric_limits<double>::infinity(), current);

  for (int k = 1; k <= max_iter; ++k) {
    const GainPair gains = gain_operators(current.tuple, problem);
    PolicyEvaluation next = evaluate(
        certainty_equivalent_controller(problem, gains.K, gains.L), k);
    const double delta = block_distance(next.tuple, current.tuple);
    record(k, delta, next);
    current = std::move(next);
    if (delta <= options.tol) {
      report.iterations = k;
      report.final_delta = delta;
      report.converged = true;
      report.wall_seconds = seconds_since(start);
      finalize(report, problem, current.tuple);
      return report;
    }
  }
  throw Error(ErrorCode::kMaxIterationsExceeded,
              "policy iteration did not reach tol within " +
                  std::to_string(max_iter) + " iterations",
              max_iter);
}

SolveReport solve(const ProblemInstance& problem, SolveMethod method,
                  const Controller& initial, const SolverOptions& options) {
  if (method == SolveMethod::kValueIteration) {
    return value_iteration_solve(problem, options);
  }
  return policy_iteration_solve(problem, initial, options);
}

double optimal_cost_control_form(const ValueCovarianceTuple& X,
                                 const MatrixXd& K,
                                 const ProblemInstance& problem) {
  const int n = problem.n(), m = problem.m();
  MatrixXd stacked(n + m, n);
  stacked << MatrixXd::Identity(n, n), K;
  return frobenius_inner(problem.Qxx(), X.S) +
         frobenius_inner(stacked.transpose() * problem.cost.Q * stacked,
                         X.Shat);
}

double optimal_cost_estimation_form(const ValueCovarianceTuple& X,
                                    const MatrixXd& L,
                                    const ProblemInstance& problem) {
  const int n = problem.n(), p = problem.p();
  MatrixXd side(n, n + p);
  side << MatrixXd::Identity(n, n), -L;
  return frobenius_inner(problem.Wxx(), X.P) +
         frobenius_inner(side * problem.noise.W * side.transpose(), X.Phat);
}

double optimal_cost(const ValueCovarianceTuple& X, const MatrixXd& K,
                    const MatrixXd& L, const ProblemInstance& problem) {
  const double control = optimal_cost_control_form(X, K, problem);
  const double estimation = optimal_cost_estimation_form(X, L, problem);
  if (std::abs(control - estimation) > kDualityTol * (1.0 + std::abs(control))) {
    throw Error(ErrorCode::kDualityViolation,
                "optimal cost forms disagree: " + std::to_string(control) +
                    " vs " + std::to_string(estimation));
  }
  return control;
}

}  // namespace mlqc
