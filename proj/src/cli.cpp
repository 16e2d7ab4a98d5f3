#include "mlqc/cli.hpp"

#include <fstream>

#include <CLI11.hpp>

#include "mlqc/bench.hpp"
#include "mlqc/errors.hpp"
#include "mlqc/json_io.hpp"
#include "mlqc/model.hpp"

namespace mlqc::cli {

using nlohmann::json;

namespace {

int report_error(const Error& e, std::ostream& err) {
  err << "error: " << e.what() << "\n";
  return e.is_input_error() ? kExitInput : kExitSolver;
}

// Loads and validates; warnings go to `err`, errors abort with kExitInput.
std::optional<ProblemInstance> load_valid_problem(
    const std::filesystem::path& path, std::ostream& err) {
  ProblemInstance problem;
  try {
    problem = read_problem_file(path);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return std::nullopt;
  }
  const ValidationReport report = validate(problem);
  err << report.to_string();
  if (report.has_errors()) return std::nullopt;
  return problem;
}

json optional_number(const std::optional<double>& value) {
  if (!value || !std::isfinite(*value)) return nullptr;
  return *value;
}

json tuple_to_json(const ValueCovarianceTuple& X) {
  return {{"P", matrix_to_json(X.P)},
          {"Phat", matrix_to_json(X.Phat)},
          {"S", matrix_to_json(X.S)},
          {"Shat", matrix_to_json(X.Shat)}};
}

std::optional<std::vector<SolveMethod>> parse_methods(
    const std::vector<std::string>& names, std::ostream& err) {
  std::vector<SolveMethod> methods;
  for (const auto& name : names) {
    const auto method = parse_method(name);
    if (!method) {
      err << "error: unknown method \"" << name << "\"\n";
      return std::nullopt;
    }
    if (std::find(methods.begin(), methods.end(), *method) == methods.end()) {
      methods.push_back(*method);
    }
  }
  return methods;
}

int write_bench_outputs(const std::vector<InstanceResult>& results,
                        const std::string& prefix, std::ostream& out,
                        std::ostream& err) {
  const std::string summary_path = prefix + "_summary.csv";
  const std::string trace_path = prefix + "_trace.csv";
  std::ofstream summary(summary_path, std::ios::binary);
  std::ofstream trace(trace_path, std::ios::binary);
  if (!summary || !trace) {
    err << "error: cannot write outputs with prefix " << prefix << "\n";
    return kExitInput;
  }
  write_summary_csv(summary, results);
  write_trace_csv(trace, results);

  std::size_t failed = 0;
  for (const auto& r : results) {
    if (!r.all_converged()) ++failed;
    if (r.generation_error) {
      err << "instance " << r.index << ": " << *r.generation_error << "\n";
    }
    for (const auto& rec : r.comparison.records) {
      if (rec.failure) {
        err << "instance " << r.index << " (eta=" << r.eta << ") "
            << to_string(rec.method) << ": " << *rec.failure << "\n";
      }
    }
  }
  out << "instances=" << results.size() << " failed=" << failed
      << " summary=" << summary_path << " trace=" << trace_path << "\n";
  return failed == 0 ? kExitOk : kExitSolver;
}

BenchConfig make_config(const BenchArgs& args,
                        const std::vector<SolveMethod>& methods) {
  BenchConfig config;
  config.etas = args.etas;
  config.count = args.count;
  config.seed = args.seed;
  config.tol = args.tol;
  config.max_iter = args.max_iter;
  config.methods = methods;
  config.jobs = args.jobs;
  return config;
}

}  // namespace

json solve_report_to_json(const SolveReport& report, bool include_trace) {
  json history = json::array();
  for (const auto& h : report.history) {
    json entry = {{"k", h.k},
                  {"delta", optional_number(h.delta)},
                  {"seconds", h.seconds}};
    if (h.cost) entry["cost"] = *h.cost;
    if (h.duality_gap) entry["duality_gap"] = *h.duality_gap;
    if (include_trace && h.error) entry["e_k"] = *h.error;
    history.push_back(std::move(entry));
  }
  return {{"method", std::string(to_string(report.method))},
          {"converged", report.converged},
          {"iterations", report.iterations},
          {"cost", report.cost},
          {"cost_duality_gap", report.cost_duality_gap},
          {"residual_norm", report.residual_norm},
          {"final_delta", report.final_delta},
          {"tol", report.tol},
          {"wall_seconds", report.wall_seconds},
          {"controller",
           {{"F", matrix_to_json(report.controller.F)},
            {"K", matrix_to_json(report.controller.K)},
            {"L", matrix_to_json(report.controller.L)}}},
          {"tuple", tuple_to_json(report.tuple)},
          {"history", std::move(history)}};
}

int cmd_validate(const std::filesystem::path& path, std::ostream& out,
                 std::ostream& err) {
  ProblemInstance problem;
  try {
    problem = read_problem_file(path);
  } catch (const Error& e) {
    return report_error(e, err);
  }
  const ValidationReport report = validate(problem);
  if (report.empty()) {
    out << "ok\n";
  } else {
    out << report.to_string();
  }
  return report.has_errors() ? kExitInput : kExitOk;
}

int cmd_solve(const SolveArgs& args, std::ostream& out, std::ostream& err) {
  const auto method = parse_method(args.method);
  if (!method) {
    err << "error: unknown method \"" << args.method << "\"\n";
    return kExitInput;
  }
  const auto problem = load_valid_problem(args.problem, err);
  if (!problem) return kExitInput;

  Controller initial;
  try {
    initial = args.init == "open-loop" ? open_loop_controller(*problem)
                                       : read_controller_file(args.init);
    check_dimensions(*problem, initial);
  } catch (const Error& e) {
    return report_error(e, err);
  }

  SolverOptions options;
  options.tol = args.tol;
  options.max_iter = args.max_iter;
  options.record_tuples = args.trace;
  SolveReport report;
  try {
    report = solve(*problem, *method, initial, options);
  } catch (const Error& e) {
    return report_error(e, err);
  }

  if (args.trace) {
    std::optional<ValueCovarianceTuple> reference;
    if (*method == SolveMethod::kPolicyIteration && args.tol <= 1e-12) {
      reference = report.tuple;
    } else {
      reference = reference_fixed_point(*problem, initial);
    }
    if (!reference) reference = report.tuple;
    std::vector<ValueCovarianceTuple> tuples;
    for (const auto& h : report.history) tuples.push_back(*h.tuple);
    const auto errors = convergence_metric(tuples, *reference);
    for (std::size_t k = 0; k < errors.size(); ++k) {
      report.history[k].error = errors[k];
    }
  }

  std::ofstream file(args.out, std::ios::binary);
  if (!file) {
    err << "error: cannot write " << args.out.string() << "\n";
    return kExitInput;
  }
  file << solve_report_to_json(report, args.trace).dump(2) << "\n";

  out << "method=" << to_string(report.method)
      << " converged=" << (report.converged ? "true" : "false")
      << " iterations=" << report.iterations << " J=" << report.cost
      << " residual=" << report.residual_norm << "\n";
  return kExitOk;
}

int cmd_bench_pendulum(const BenchArgs& args, std::ostream& out,
                       std::ostream& err) {
  const auto methods = parse_methods(args.methods, err);
  if (!methods) return kExitInput;
  try {
    const BenchConfig config = make_config(args, *methods);
    return write_bench_outputs(run_pendulum_bench(config), args.out, out, err);
  } catch (const Error& e) {
    return report_error(e, err);
  }
}

int cmd_bench_random(const BenchArgs& args, std::ostream& out,
                     std::ostream& err) {
  const auto methods = parse_methods(args.methods, err);
  if (!methods) return kExitInput;
  try {
    const BenchConfig config = make_config(args, *methods);
    return write_bench_outputs(run_random_bench(config), args.out, out, err);
  } catch (const Error& e) {
    return report_error(e, err);
  }
}

int cmd_rollout(const RolloutArgs& args, std::ostream& out,
                std::ostream& err) {
  const auto problem = load_valid_problem(args.problem, err);
  if (!problem) return kExitInput;
  try {
    const Controller ctrl = read_controller_file(args.controller);
    const RolloutEstimate estimate = monte_carlo_cost(
        *problem, ctrl, args.horizon, args.trials, args.seed);
    const json doc = {{"horizon", estimate.horizon},
                      {"trials", estimate.trials},
                      {"seed", estimate.seed},
                      {"cost_mean", estimate.cost_mean},
                      {"cost_stderr", estimate.cost_stderr}};
    out << doc.dump() << "\n";
    return kExitOk;
  } catch (const Error& e) {
    return report_error(e, err);
  }
}

int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Optimal output-feedback control with multiplicative noise"};
  app.require_subcommand(1);

  std::filesystem::path validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "Check a problem file");
  validate_cmd->add_option("problem", validate_path)->required();

  SolveArgs solve_args;
  auto* solve_cmd = app.add_subcommand("solve", "Solve one problem");
  solve_cmd->add_option("problem", solve_args.problem)->required();
  solve_cmd->add_option("--method", solve_args.method)
      ->check(CLI::IsMember({"pi", "vi"}));
  solve_cmd->add_option("--tol", solve_args.tol)
      ->check(CLI::PositiveNumber);
  solve_cmd->add_option("--max-iter", solve_args.max_iter)
      ->check(CLI::PositiveNumber);
  solve_cmd->add_option("--init", solve_args.init,
                        "open-loop or a controller JSON file");
  solve_cmd->add_flag("--trace", solve_args.trace);
  solve_cmd->add_option("--out", solve_args.out)->required();

  BenchArgs pendulum_args;
  auto* pendulum_cmd =
      app.add_subcommand("bench-pendulum", "Pendulum noise-level sweep");
  pendulum_cmd->add_option("--etas", pendulum_args.etas)
      ->delimiter(',')
      ->required();
  pendulum_cmd->add_option("--methods", pendulum_args.methods)->delimiter(',');
  pendulum_cmd->add_option("--tol", pendulum_args.tol)
      ->check(CLI::PositiveNumber);
  pendulum_cmd->add_option("--max-iter", pendulum_args.max_iter)
      ->check(CLI::PositiveNumber);
  pendulum_cmd->add_option("--jobs", pendulum_args.jobs)
      ->check(CLI::PositiveNumber);
  pendulum_cmd->add_option("--out", pendulum_args.out)->required();

  BenchArgs random_args;
  auto* random_cmd =
      app.add_subcommand("bench-random", "Random-instance ensemble");
  random_cmd->add_option("--count", random_args.count)
      ->required()
      ->check(CLI::PositiveNumber);
  random_cmd->add_option("--seed", random_args.seed)->required();
  random_cmd->add_option("--methods", random_args.methods)->delimiter(',');
  random_cmd->add_option("--tol", random_args.tol)
      ->check(CLI::PositiveNumber);
  random_cmd->add_option("--max-iter", random_args.max_iter)
      ->check(CLI::PositiveNumber);
  random_cmd->add_option("--jobs", random_args.jobs)
      ->check(CLI::PositiveNumber);
  random_cmd->add_option("--out", random_args.out)->required();

  RolloutArgs rollout_args;
  auto* rollout_cmd =
      app.add_subcommand("rollout", "Monte-Carlo cost of a controller");
  rollout_cmd->add_option("problem", rollout_args.problem)->required();
  rollout_cmd->add_option("controller", rollout_args.controller)->required();
  rollout_cmd->add_option("--horizon", rollout_args.horizon)
      ->required()
      ->check(CLI::PositiveNumber);
  rollout_cmd->add_option("--trials", rollout_args.trials)
      ->required()
      ->check(CLI::PositiveNumber);
  rollout_cmd->add_option("--seed", rollout_args.seed)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    if (*validate_cmd) return cmd_validate(validate_path, out, err);
    if (*solve_cmd) return cmd_solve(solve_args, out, err);
    if (*pendulum_cmd) return cmd_bench_pendulum(pendulum_args, out, err);
    if (*random_cmd) return cmd_bench_random(random_args, out, err);
    if (*rollout_cmd) return cmd_rollout(rollout_args, out, err);
  } catch (const Error& e) {
    return report_error(e, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitSolver;
  }
  return kExitInput;
}

}  // namespace mlqc::cli
