#include "mlqc/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "mlqc/errors.hpp"
#include "mlqc/json_io.hpp"
#include "mlqc/linalg.hpp"

namespace mlqc {

using nlohmann::json;

namespace {

std::string shape(long rows, long cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

const json& require(const json& doc, const char* key) {
  if (!doc.contains(key)) {
    throw Error(ErrorCode::kSchema, std::string("missing field \"") + key + "\"");
  }
  return doc.at(key);
}

int positive_int(const json& doc, const char* key) {
  const json& v = require(doc, key);
  if (!v.is_number_integer() || v.get<long long>() <= 0) {
    throw Error(ErrorCode::kSchema,
                std::string("field \"") + key + "\" must be a positive integer");
  }
  return v.get<int>();
}

std::vector<NoiseTerm> noise_list(const json& noise, const char* key,
                                  long rows, long cols) {
  std::vector<NoiseTerm> terms;
  if (!noise.contains(key)) return terms;
  const json& list = noise.at(key);
  const std::string field = std::string("noise.") + key;
  if (!list.is_array()) {
    throw Error(ErrorCode::kSchema, field + " must be an array");
  }
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string item = field + "[" + std::to_string(i) + "]";
    const json& entry = list[i];
    if (!entry.is_object() || !entry.contains("sigma") ||
        !entry.contains("pattern")) {
      throw Error(ErrorCode::kSchema,
                  item + " must be an object with \"sigma\" and \"pattern\"");
    }
    if (!entry.at("sigma").is_number()) {
      throw Error(ErrorCode::kSchema, item + ".sigma must be a number");
    }
    terms.push_back({entry.at("sigma").get<double>(),
                     matrix_from_json(entry.at("pattern"), item + ".pattern",
                                      rows, cols)});
  }
  return terms;
}

json noise_to_json(const std::vector<NoiseTerm>& terms) {
  json list = json::array();
  for (const auto& t : terms) {
    list.push_back({{"sigma", t.sigma}, {"pattern", matrix_to_json(t.pattern)}});
  }
  return list;
}

json parse_document(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kParse, "cannot open " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

bool all_finite(const MatrixXd& M) { return M.allFinite(); }

void check_symmetric_matrix(const MatrixXd& M, const std::string& name,
                            std::vector<Violation>& out) {
  if ((M - M.transpose()).norm() > kSymmetryRelTol * (1.0 + M.norm())) {
    out.push_back({name, name + " not symmetric", Severity::kError});
  }
}

}  // namespace

json matrix_to_json(const MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd matrix_from_json(const json& value, const std::string& field,
                          long rows, long cols) {
  if (!value.is_array()) {
    throw Error(ErrorCode::kSchema, field + " must be a nested array");
  }
  const long r = static_cast<long>(value.size());
  long c = -1;
  for (const auto& row : value) {
    if (!row.is_array()) {
      throw Error(ErrorCode::kSchema, field + " must be a nested array");
    }
    if (c < 0) c = static_cast<long>(row.size());
    if (static_cast<long>(row.size()) != c) {
      throw Error(ErrorCode::kSchema, field + " has ragged rows");
    }
  }
  if (c < 0) c = 0;
  if ((rows >= 0 && r != rows) || (cols >= 0 && c != cols)) {
    throw Error(ErrorCode::kSchema, field + " has shape " + shape(r, c) +
                                        ", expected " + shape(rows, cols));
  }
  MatrixXd M(r, c);
  for (long i = 0; i < r; ++i) {
    for (long j = 0; j < c; ++j) {
      const json& x = value[i][j];
      if (!x.is_number()) {
        throw Error(ErrorCode::kSchema, field + " has a non-numeric entry");
      }
      M(i, j) = x.get<double>();
    }
  }
  return M;
}

Controller open_loop_controller(const ProblemInstance& problem) {
  return {problem.system.A, MatrixXd::Zero(problem.m(), problem.n()),
          MatrixXd::Zero(problem.n(), problem.p())};
}

Controller certainty_equivalent_controller(const ProblemInstance& problem,
                                           const MatrixXd& K,
                                           const MatrixXd& L) {
  const auto& sys = problem.system;
  return {sys.A + sys.B * K - L * sys.C, K, L};
}

bool ValidationReport::has_errors() const {
  for (const auto& v : violations) {
    if (v.severity == Severity::kError) return true;
  }
  return false;
}

std::string ValidationReport::to_string() const {
  std::ostringstream out;
  for (const auto& v : violations) {
    out << (v.severity == Severity::kError ? "error" : "warning") << ": "
        << v.field << ": " << v.check << "\n";
  }
  return out.str();
}

ValidationReport validate(const ProblemInstance& problem) {
  ValidationReport report;
  auto& out = report.violations;
  const auto& sys = problem.system;
  const int n = sys.n, m = sys.m, p = sys.p;

  if (n <= 0 || m <= 0 || p <= 0) {
    out.push_back({"n/m/p", "dimensions must be positive", Severity::kError});
    return report;
  }

  auto check_shape = [&](const MatrixXd& M, const std::string& name, long r,
                         long c) {
    if (M.rows() != r || M.cols() != c) {
      out.push_back({name,
                     "shape " + shape(M.rows(), M.cols()) + ", expected " +
                         shape(r, c),
                     Severity::kError});
      return false;
    }
    if (!all_finite(M)) {
      out.push_back({name, "non-finite entry", Severity::kError});
      return false;
    }
    return true;
  };

  check_shape(sys.A, "A", n, n);
  check_shape(sys.B, "B", n, m);
  check_shape(sys.C, "C", p, n);
  auto check_noise = [&](const std::vector<NoiseTerm>& terms,
                         const std::string& name, long r, long c) {
    for (std::size_t i = 0; i < terms.size(); ++i) {
      const std::string item = name + "[" + std::to_string(i) + "]";
      if (!(terms[i].sigma >= 0.0) || !std::isfinite(terms[i].sigma)) {
        out.push_back({item + ".sigma", "sigma must be finite and >= 0",
                       Severity::kError});
      }
      check_shape(terms[i].pattern, item + ".pattern", r, c);
    }
  };
  check_noise(sys.noiseA, "noise.A", n, n);
  check_noise(sys.noiseB, "noise.B", n, m);
  check_noise(sys.noiseC, "noise.C", p, n);

  if (check_shape(problem.cost.Q, "Q", n + m, n + m)) {
    check_symmetric_matrix(problem.cost.Q, "Q", out);
    if (!(min_symmetric_eigenvalue(problem.cost.Q) > kPositiveDefiniteFloor)) {
      out.push_back({"Q", "Q not positive definite", Severity::kError});
    }
  }
  if (check_shape(problem.noise.W, "W", n + p, n + p)) {
    check_symmetric_matrix(problem.noise.W, "W", out);
    const MatrixXd& W = problem.noise.W;
    const double lambda = min_symmetric_eigenvalue(W);
    if (!(lambda > kPositiveDefiniteFloor)) {
      if (lambda >= -kSemidefiniteRelTol * (1.0 + W.norm())) {
        out.push_back({"W", "W not positive definite (semidefinite accepted)",
                       Severity::kWarning});
      } else {
        out.push_back({"W", "W not positive semidefinite", Severity::kError});
      }
    }
  }
  if (check_shape(problem.noise.X0, "X0", n, n)) {
    check_symmetric_matrix(problem.noise.X0, "X0", out);
    if (!is_psd(problem.noise.X0, kSemidefiniteRelTol)) {
      out.push_back({"X0", "X0 not positive semidefinite", Severity::kError});
    }
  }
  return report;
}

void check_dimensions(const ProblemInstance& problem, const Controller& ctrl) {
  const int n = problem.n(), m = problem.m(), p = problem.p();
  auto expect = [](const MatrixXd& M, const char* name, long r, long c) {
    if (M.rows() != r || M.cols() != c) {
      throw Error(ErrorCode::kSchema,
                  std::string("controller ") + name + " has shape " +
                      shape(M.rows(), M.cols()) + ", expected " + shape(r, c));
    }
  };
  expect(ctrl.F, "F", n, n);
  expect(ctrl.K, "K", m, n);
  expect(ctrl.L, "L", n, p);
}

ProblemInstance load_problem(std::string_view text) {
  const json doc = parse_document(text);
  if (!doc.is_object()) {
    throw Error(ErrorCode::kSchema, "problem document must be a JSON object");
  }
  ProblemInstance problem;
  auto& sys = problem.system;
  sys.n = positive_int(doc, "n");
  sys.m = positive_int(doc, "m");
  sys.p = positive_int(doc, "p");
  const long n = sys.n, m = sys.m, p = sys.p;
  sys.A = matrix_from_json(require(doc, "A"), "A", n, n);
  sys.B = matrix_from_json(require(doc, "B"), "B", n, m);
  sys.C = matrix_from_json(require(doc, "C"), "C", p, n);
  if (doc.contains("noise")) {
    const json& noise = doc.at("noise");
    if (!noise.is_object()) {
      throw Error(ErrorCode::kSchema, "noise must be an object");
    }
    sys.noiseA = noise_list(noise, "A", n, n);
    sys.noiseB = noise_list(noise, "B", n, m);
    sys.noiseC = noise_list(noise, "C", p, n);
  }
  problem.cost.Q = matrix_from_json(require(doc, "Q"), "Q", n + m, n + m);
  problem.noise.W = matrix_from_json(require(doc, "W"), "W", n + p, n + p);
  problem.noise.X0 = doc.contains("X0")
                         ? matrix_from_json(doc.at("X0"), "X0", n, n)
                         : MatrixXd::Zero(n, n);
  return problem;
}

std::string save_problem(const ProblemInstance& problem) {
  const auto& sys = problem.system;
  json doc;
  doc["n"] = sys.n;
  doc["m"] = sys.m;
  doc["p"] = sys.p;
  doc["A"] = matrix_to_json(sys.A);
  doc["B"] = matrix_to_json(sys.B);
  doc["C"] = matrix_to_json(sys.C);
  doc["noise"] = {{"A", noise_to_json(sys.noiseA)},
                  {"B", noise_to_json(sys.noiseB)},
                  {"C", noise_to_json(sys.noiseC)}};
  doc["Q"] = matrix_to_json(problem.cost.Q);
  doc["W"] = matrix_to_json(problem.noise.W);
  doc["X0"] = matrix_to_json(problem.noise.X0);
  return doc.dump(2) + "\n";
}

ProblemInstance read_problem_file(const std::filesystem::path& path) {
  return load_problem(read_file(path));
}

Controller load_controller(std::string_view text) {
  const json doc = parse_document(text);
  if (!doc.is_object()) {
    throw Error(ErrorCode::kSchema, "controller document must be a JSON object");
  }
  return {matrix_from_json(require(doc, "F"), "F"),
          matrix_from_json(require(doc, "K"), "K"),
          matrix_from_json(require(doc, "L"), "L")};
}

std::string save_controller(const Controller& ctrl) {
  json doc;
  doc["F"] = matrix_to_json(ctrl.F);
  doc["K"] = matrix_to_json(ctrl.K);
  doc["L"] = matrix_to_json(ctrl.L);
  return doc.dump(2) + "\n";
}

Controller read_controller_file(const std::filesystem::path& path) {
  return load_controller(read_file(path));
}

}  // namespace mlqc
