#pragma once

#include <string>

#include <Eigen/Dense>
#include <json.hpp>

namespace mlqc {

/// Row-major nested array.
nlohmann::json matrix_to_json(const Eigen::MatrixXd& M);

/// Parses a rectangular nested array of numbers. `field` names the value in
/// error messages. Throws Error{kSchema} on shape or type problems, and when
/// the parsed shape differs from (rows, cols) if those are nonnegative.
Eigen::MatrixXd matrix_from_json(const nlohmann::json& value,
                                 const std::string& field, long rows = -1,
                                 long cols = -1);

}  // namespace mlqc
