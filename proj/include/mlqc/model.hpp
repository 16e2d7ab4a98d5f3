#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace mlqc {

using Eigen::MatrixXd;

/// One multiplicative-noise direction: the random matrix gets σ·ξ·pattern
/// added, with ξ a zero-mean unit-variance scalar.
struct NoiseTerm {
  double sigma = 0.0;
  MatrixXd pattern;

  double variance() const { return sigma * sigma; }
};

/// Mean dynamics and multiplicative noise of
///   x⁺ = A_t x + B_t u + w,   y = C_t x + v.
struct SystemModel {
  int n = 0;
  int m = 0;
  int p = 0;
  MatrixXd A;
  MatrixXd B;
  MatrixXd C;
  std::vector<NoiseTerm> noiseA;
  std::vector<NoiseTerm> noiseB;
  std::vector<NoiseTerm> noiseC;
};

/// Stage cost [x; u]ᵀ Q [x; u].
struct CostModel {
  MatrixXd Q;
};

/// Joint covariance of (w, v) and the initial-state covariance.
struct NoiseModel {
  MatrixXd W;
  MatrixXd X0;
};

struct ProblemInstance {
  SystemModel system;
  CostModel cost;
  NoiseModel noise;

  int n() const { return system.n; }
  int m() const { return system.m; }
  int p() const { return system.p; }

  auto Qxx() const { return cost.Q.topLeftCorner(n(), n()); }
  auto Qxu() const { return cost.Q.topRightCorner(n(), m()); }
  auto Qux() const { return cost.Q.bottomLeftCorner(m(), n()); }
  auto Quu() const { return cost.Q.bottomRightCorner(m(), m()); }

  auto Wxx() const { return noise.W.topLeftCorner(n(), n()); }
  auto Wxy() const { return noise.W.topRightCorner(n(), p()); }
  auto Wyx() const { return noise.W.bottomLeftCorner(p(), n()); }
  auto Wyy() const { return noise.W.bottomRightCorner(p(), p()); }
};

/// Linear dynamic compensator x̂⁺ = F x̂ + L y, u = K x̂, started at x̂₀ = 0.
struct Controller {
  MatrixXd F;
  MatrixXd K;
  MatrixXd L;
};

/// The open-loop compensator (A, 0, 0).
Controller open_loop_controller(const ProblemInstance& problem);

/// (A + BK − LC, K, L), the form every policy-iteration iterate takes.
Controller certainty_equivalent_controller(const ProblemInstance& problem,
                                           const MatrixXd& K,
                                           const MatrixXd& L);

enum class Severity { kWarning, kError };

struct Violation {
  std::string field;
  std::string check;
  Severity severity = Severity::kError;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool empty() const { return violations.empty(); }
  bool has_errors() const;
  std::string to_string() const;
};

// Definiteness thresholds applied to Q, W and X0.
inline constexpr double kPositiveDefiniteFloor = 1e-12;
inline constexpr double kSemidefiniteRelTol = 1e-10;
inline constexpr double kSymmetryRelTol = 1e-10;

/// Checks every structural and definiteness invariant. A W that is only
/// semidefinite produces a warning-level violation rather than an error.
ValidationReport validate(const ProblemInstance& problem);

/// Throws Error{kSchema} if the controller's shapes do not fit the problem.
void check_dimensions(const ProblemInstance& problem, const Controller& ctrl);

// JSON (de)serialization. Matrices are row-major nested arrays.
ProblemInstance load_problem(std::string_view text);
std::string save_problem(const ProblemInstance& problem);
ProblemInstance read_problem_file(const std::filesystem::path& path);

Controller load_controller(std::string_view text);
std::string save_controller(const Controller& ctrl);
Controller read_controller_file(const std::filesystem::path& path);

}  // namespace mlqc
