#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace feinn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Physical or reference coordinate; 1D uses only the first component.
using Point = std::array<double, 2>;

/// Malformed input stream or config text; carries a 1-based line number.
class ParseError : public std::runtime_error {
public:
  ParseError(std::string msg, int line)
      : std::runtime_error("line " + std::to_string(line) + ": " + std::move(msg)), line_(line) {}
  int line() const { return line_; }

private:
  int line_;
};

/// Non-finite value or other numeric breakdown.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class SingularMatrixError : public NumericError {
public:
  using NumericError::NumericError;
};

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace feinn
