#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlqc/riccati.hpp"

namespace mlqc::cli {

// Process exit codes. No other nonzero code is ever returned.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitSolver = 3;

struct SolveArgs {
  std::filesystem::path problem;
  std::string method = "pi";
  double tol = 1e-12;
  int max_iter = 0;
  std::string init = "open-loop";
  bool trace = false;
  std::filesystem::path out;
};

struct BenchArgs {
  std::vector<double> etas;
  int count = 1;
  std::uint64_t seed = 0;
  std::vector<std::string> methods = {"pi", "vi"};
  double tol = 1e-12;
  int max_iter = 0;
  int jobs = 1;
  std::string out;
};

struct RolloutArgs {
  std::filesystem::path problem;
  std::filesystem::path controller;
  int horizon = 10000;
  int trials = 200;
  std::uint64_t seed = 0;
};

int cmd_validate(const std::filesystem::path& path, std::ostream& out,
                 std::ostream& err);
int cmd_solve(const SolveArgs& args, std::ostream& out, std::ostream& err);
int cmd_bench_pendulum(const BenchArgs& args, std::ostream& out,
                       std::ostream& err);
int cmd_bench_random(const BenchArgs& args, std::ostream& out,
                     std::ostream& err);
int cmd_rollout(const RolloutArgs& args, std::ostream& out, std::ostream& err);

/// JSON document for a solve report. Matrices are row-major nested arrays;
/// e^k values appear only when `include_trace` is set and were computed.
nlohmann::json solve_report_to_json(const SolveReport& report,
                                    bool include_trace);

/// Parses argv and dispatches to one of the commands above.
int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err);

}  // namespace mlqc::cli
