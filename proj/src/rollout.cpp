#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "mlqc/bench.hpp"
#include "mlqc/errors.hpp"
#include "mlqc/linalg.hpp"

namespace mlqc {

namespace {

struct TrialBuffers {
  Eigen::VectorXd x, xhat, u, y, x_next, xhat_next, noise_draw, noise;
};

}  // namespace

RolloutEstimate monte_carlo_cost(const ProblemInstance& problem,
                                 const Controller& ctrl, int horizon,
                                 int trials, std::uint64_t seed) {
  if (horizon < 1) throw Error(ErrorCode::kSchema, "horizon must be >= 1");
  if (trials < 1) throw Error(ErrorCode::kSchema, "trials must be >= 1");
  check_dimensions(problem, ctrl);

  const auto& sys = problem.system;
  const int n = sys.n, m = sys.m, p = sys.p;
  const MatrixXd noise_root = psd_sqrt(problem.noise.W);
  const MatrixXd initial_root = psd_sqrt(problem.noise.X0);
  const MatrixXd Qxx = problem.Qxx();
  const MatrixXd Qxu = problem.Qxu();
  const MatrixXd Quu = problem.Quu();

  std::vector<double> trial_costs(static_cast<std::size_t>(trials));
  TrialBuffers buf;
  buf.x.resize(n);
  buf.xhat.resize(n);
  buf.u.resize(m);
  buf.y.resize(p);
  buf.x_next.resize(n);
  buf.xhat_next.resize(n);
  buf.noise_draw.resize(n + p);
  buf.noise.resize(n + p);

  for (int trial = 0; trial < trials; ++trial) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(trial)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto fill_normal = [&](Eigen::VectorXd& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
    };

    Eigen::VectorXd start(n);
    fill_normal(start);
    buf.x.noalias() = initial_root * start;
    buf.xhat.setZero();

    double total = 0.0;
    for (int t = 0; t < horizon; ++t) {
      buf.u.noalias() = ctrl.K * buf.xhat;
      total += buf.x.dot(Qxx * buf.x) + 2.0 * buf.x.dot(Qxu * buf.u) +
               buf.u.dot(Quu * buf.u);

      fill_normal(buf.noise_draw);
      buf.noise.noalias() = noise_root * buf.noise_draw;

      buf.x_next.noalias() = sys.A * buf.x;
      buf.x_next.noalias() += sys.B * buf.u;
      for (const auto& term : sys.noiseA) {
        buf.x_next.noalias() += (term.sigma * normal(rng)) * term.pattern * buf.x;
      }
      for (const auto& term : sys.noiseB) {
        buf.x_next.noalias() += (term.sigma * normal(rng)) * term.pattern * buf.u;
      }
      buf.x_next += buf.noise.head(n);

      buf.y.noalias() = sys.C * buf.x;
      for (const auto& term : sys.noiseC) {
        buf.y.noalias() += (term.sigma * normal(rng)) * term.pattern * buf.x;
      }
      buf.y += buf.noise.tail(p);

      buf.xhat_next.noalias() = ctrl.F * buf.xhat;
      buf.xhat_next.noalias() += ctrl.L * buf.y;

      buf.x.swap(buf.x_next);
      buf.xhat.swap(buf.xhat_next);
      const double magnitude =
          std::max(buf.x.lpNorm<Eigen::Infinity>(),
                   buf.xhat.lpNorm<Eigen::Infinity>());
      if (!std::isfinite(magnitude) || magnitude > kRolloutOverflowGuard) {
        throw Error(ErrorCode::kUnstableRollout,
                    "state magnitude exceeded 1e150 at step " +
                        std::to_string(t + 1) + " of trial " +
                        std::to_string(trial));
      }
    }
    trial_costs[static_cast<std::size_t>(trial)] = total / horizon;
  }

  double mean = 0.0;
  for (double c : trial_costs) mean += c;
  mean /= trials;
  double sum_sq = 0.0;
  for (double c : trial_costs) sum_sq += (c - mean) * (c - mean);
  const double stderr_value =
      trials > 1 ? std::sqrt(sum_sq / (trials - 1) / trials) : 0.0;

  return {horizon, trials, seed, mean, stderr_value};
}

}  // namespace mlqc
