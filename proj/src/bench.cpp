#include "mlqc/bench.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <thread>

#include "mlqc/errors.hpp"
#include "mlqc/linalg.hpp"

namespace mlqc {

namespace {

// splitmix64 finalizer.
std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

MatrixXd standard_normal(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd M(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) M(i, j) = normal(rng);
  }
  return M;
}

double open_loop_radius(const ProblemInstance& problem) {
  return spectral_radius(build_second_moment_matrix(
      build_augmented(problem, open_loop_controller(problem)),
      MomentSide::kValue));
}

void set_variances(ProblemInstance& problem, const Eigen::Vector3d& variances) {
  problem.system.noiseA[0].sigma = std::sqrt(variances(0));
  problem.system.noiseB[0].sigma = std::sqrt(variances(1));
  problem.system.noiseC[0].sigma = std::sqrt(variances(2));
}

// Scale c with ρ(Ψ_open-loop(c · variances)) = 1, by bisection. Returns
// nullopt when no finite scale reaches the boundary.
std::optional<double> boundary_scale(ProblemInstance problem,
                                     const Eigen::Vector3d& variances) {
  auto radius_at = [&](double scale) {
    set_variances(problem, scale * variances);
    return open_loop_radius(problem);
  };
  double lo = 0.0;
  double hi = 1.0;
  int doublings = 0;
  while (radius_at(hi) < 1.0) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > 400 || !std::isfinite(hi)) return std::nullopt;
  }
  for (int i = 0; i < 400 && hi - lo > 1e-14 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (radius_at(mid) < 1.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

ConvergenceRecord run_method(const ProblemInstance& problem,
                             SolveMethod method, const BenchConfig& config) {
  ConvergenceRecord rec;
  rec.method = method;
  SolverOptions options;
  options.tol = config.tol;
  options.max_iter = config.max_iter;
  try {
    SolveReport report =
        solve(problem, method, open_loop_controller(problem), options);
    rec.iterations = report.iterations;
    rec.final_residual = report.residual_norm;
    rec.cost = report.cost;
    rec.converged = report.converged;
    for (const auto& h : report.history) rec.cum_seconds.push_back(h.seconds);
    rec.report = std::move(report);
  } catch (const Error& e) {
    rec.failure = e.what();
    rec.failure_code = e.code();
    if (e.iteration()) rec.iterations = *e.iteration();
  }
  return rec;
}

template <typename Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(jobs, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

void BenchConfig::check() const {
  for (double eta : etas) {
    if (!(eta >= 0.0 && eta <= 1.0)) {
      throw Error(ErrorCode::kSchema, "eta must lie in [0, 1]");
    }
  }
  if (count < 1) throw Error(ErrorCode::kSchema, "count must be >= 1");
  if (methods.empty()) throw Error(ErrorCode::kSchema, "no methods selected");
  if (!(tol > 0.0)) throw Error(ErrorCode::kSchema, "tol must be positive");
  if (max_iter < 0) throw Error(ErrorCode::kSchema, "max_iter must be >= 0");
  if (jobs < 1) throw Error(ErrorCode::kSchema, "jobs must be >= 1");
}

ProblemInstance pendulum_problem(double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw Error(ErrorCode::kSchema, "eta must lie in [0, 1]");
  }
  ProblemInstance problem;
  auto& sys = problem.system;
  sys.n = 2;
  sys.m = 1;
  sys.p = 1;
  sys.A.resize(2, 2);
  sys.A << 1.0, 0.1, 1.0, 0.95;
  sys.B.resize(2, 1);
  sys.B << 0.0, 0.1;
  sys.C.resize(1, 2);
  sys.C << 1.0, 0.0;
  MatrixXd pattern(2, 1);
  pattern << 0.0, 1.0;
  sys.noiseB.push_back({eta * 1.0, pattern});
  problem.cost.Q = MatrixXd::Identity(3, 3);
  problem.noise.W = Eigen::Vector3d(0.0, 0.01, 0.001).asDiagonal();
  problem.noise.X0 = MatrixXd::Zero(2, 2);
  return problem;
}

std::uint64_t derive_instance_seed(std::uint64_t batch_seed,
                                   std::uint64_t index) {
  return mix(mix(batch_seed) ^ (index + 1));
}

RandomProblem random_problem(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const int n = 2, m = 1, p = 1;

  for (int draw = 0; draw < kRandomProblemMaxDraws; ++draw) {
    ProblemInstance problem;
    auto& sys = problem.system;
    sys.n = n;
    sys.m = m;
    sys.p = p;
    sys.A = standard_normal(rng, n, n);
    sys.B = standard_normal(rng, n, m);
    sys.C = standard_normal(rng, p, n);
    sys.noiseA.push_back({0.0, standard_normal(rng, n, n)});
    sys.noiseB.push_back({0.0, standard_normal(rng, n, m)});
    sys.noiseC.push_back({0.0, standard_normal(rng, p, n)});
    const double target_radius = uniform(rng);
    Eigen::Vector3d variances(uniform(rng), uniform(rng), uniform(rng));
    const double eta = uniform(rng);
    problem.cost.Q = MatrixXd::Identity(n + m, n + m);
    problem.noise.W = 0.01 * MatrixXd::Identity(n + p, n + p);
    problem.noise.X0 = MatrixXd::Zero(n, n);

    const double radius_A = spectral_radius(sys.A);
    if (!(radius_A > 1e-12) || !(target_radius > 0.0)) continue;
    sys.A *= target_radius / radius_A;

    const auto scale = boundary_scale(problem, variances);
    if (!scale) continue;

    RandomProblem out;
    out.variance_scale = *scale;
    out.calibrated = problem;
    set_variances(out.calibrated, *scale * variances);
    out.problem = problem;
    set_variances(out.problem, eta * *scale * variances);
    out.eta = eta;
    return out;
  }
  throw Error(ErrorCode::kRetryExhausted,
              "could not calibrate the noise variances after " +
                  std::to_string(kRandomProblemMaxDraws) + " draws");
}

std::vector<double> convergence_metric(
    const std::vector<ValueCovarianceTuple>& history,
    const ValueCovarianceTuple& reference) {
  std::vector<double> errors;
  if (history.empty()) return errors;
  auto blocks = [](const ValueCovarianceTuple& X) {
    return std::array<const MatrixXd*, 4>{&X.P, &X.Phat, &X.S, &X.Shat};
  };
  const auto ref = blocks(reference);
  const auto first = blocks(history.front());
  std::array<double, 4> initial_error{};
  for (int b = 0; b < 4; ++b) {
    initial_error[b] = (*first[b] - *ref[b]).norm();
  }
  errors.reserve(history.size());
  for (const auto& X : history) {
    const auto cur = blocks(X);
    double e = 0.0;
    for (int b = 0; b < 4; ++b) {
      if (initial_error[b] <= 1e-300) continue;
      e = std::max(e, (*cur[b] - *ref[b]).norm() / initial_error[b]);
    }
    errors.push_back(e);
  }
  return errors;
}

std::optional<ValueCovarianceTuple> reference_fixed_point(
    const ProblemInstance& problem, const Controller& initial) {
  SolverOptions options;
  options.tol = 1e-12;
  options.record_tuples = false;
  try {
    return policy_iteration_solve(problem, initial, options).tuple;
  } catch (const Error&) {
  }
  try {
    return value_iteration_solve(problem, options).tuple;
  } catch (const Error&) {
  }
  return std::nullopt;
}

ComparisonResult run_comparison(const ProblemInstance& problem,
                                const BenchConfig& config) {
  ComparisonResult result;
  for (SolveMethod method : config.methods) {
    result.records.push_back(run_method(problem, method, config));
  }

  const ConvergenceRecord* pi = nullptr;
  const ConvergenceRecord* vi = nullptr;
  for (const auto& rec : result.records) {
    if (rec.method == SolveMethod::kPolicyIteration) pi = &rec;
    if (rec.method == SolveMethod::kValueIteration) vi = &rec;
  }

  if (pi && pi->converged && config.tol <= 1e-12) {
    result.reference = pi->report->tuple;
  } else {
    result.reference =
        reference_fixed_point(problem, open_loop_controller(problem));
  }

  if (result.reference) {
    for (auto& rec : result.records) {
      if (!rec.report) continue;
      std::vector<ValueCovarianceTuple> tuples;
      for (const auto& h : rec.report->history) {
        if (h.tuple) tuples.push_back(*h.tuple);
      }
      rec.errors = convergence_metric(tuples, *result.reference);
      for (std::size_t k = 0; k < rec.errors.size(); ++k) {
        rec.report->history[k].error = rec.errors[k];
      }
    }
  }

  if (pi && vi && pi->converged && vi->converged && pi->iterations > 0) {
    ComparisonRatios ratios;
    ratios.iterations =
        static_cast<double>(vi->iterations) / static_cast<double>(pi->iterations);
    ratios.seconds = pi->report->wall_seconds > 0.0
                         ? vi->report->wall_seconds / pi->report->wall_seconds
                         : std::numeric_limits<double>::infinity();
    result.ratios = ratios;
  }
  return result;
}

bool InstanceResult::all_converged() const {
  if (generation_error) return false;
  for (const auto& rec : comparison.records) {
    if (!rec.converged) return false;
  }
  return true;
}

std::vector<InstanceResult> run_pendulum_bench(const BenchConfig& config) {
  config.check();
  std::vector<InstanceResult> results(config.etas.size());
  parallel_for(results.size(), config.jobs, [&](std::size_t i) {
    InstanceResult& r = results[i];
    r.index = i;
    r.seed = 0;
    r.eta = config.etas[i];
    r.comparison = run_comparison(pendulum_problem(r.eta), config);
  });
  return results;
}

std::vector<InstanceResult> run_random_bench(const BenchConfig& config) {
  config.check();
  std::vector<InstanceResult> results(static_cast<std::size_t>(config.count));
  parallel_for(results.size(), config.jobs, [&](std::size_t i) {
    InstanceResult& r = results[i];
    r.index = i;
    r.seed = derive_instance_seed(config.seed, i);
    try {
      const RandomProblem generated = random_problem(r.seed);
      r.eta = generated.eta;
      r.comparison = run_comparison(generated.problem, config);
    } catch (const Error& e) {
      r.generation_error = e.what();
    }
  });
  return results;
}

void write_summary_csv(std::ostream& out,
                       const std::vector<InstanceResult>& results) {
  out << "seed,eta,method,iterations,wall_seconds,final_residual,cost_J,"
         "converged,iteration_ratio,time_ratio,status\n";
  for (const auto& r : results) {
    if (r.generation_error) {
      out << r.seed << "," << format_double(r.eta) << ",,,,,,false,,,"
          << "generation_failed\n";
      continue;
    }
    const auto& ratios = r.comparison.ratios;
    for (const auto& rec : r.comparison.records) {
      out << r.seed << "," << format_double(r.eta) << ","
          << to_string(rec.method) << "," << rec.iterations << ",";
      if (rec.report) {
        out << format_double(rec.report->wall_seconds) << ","
            << format_double(rec.final_residual) << ","
            << format_double(rec.cost);
      } else {
        out << ",,";
      }
      out << "," << (rec.converged ? "true" : "false") << ",";
      if (ratios) {
        out << format_double(ratios->iterations) << ","
            << format_double(ratios->seconds);
      } else {
        out << ",";
      }
      out << ","
          << (rec.failure_code ? std::string(to_string(*rec.failure_code))
                               : std::string("ok"))
          << "\n";
    }
  }
}

void write_trace_csv(std::ostream& out,
                     const std::vector<InstanceResult>& results) {
  out << "seed,method,k,e_k,cum_seconds,eta\n";
  for (const auto& r : results) {
    for (const auto& rec : r.comparison.records) {
      for (std::size_t k = 0; k < rec.errors.size(); ++k) {
        out << r.seed << "," << to_string(rec.method) << "," << k << ","
            << format_double(rec.errors[k]) << ","
            << format_double(rec.cum_seconds[k]) << ","
            << format_double(r.eta) << "\n";
      }
    }
  }
}

}  // namespace mlqc
