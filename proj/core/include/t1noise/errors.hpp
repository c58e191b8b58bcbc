#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace t1noise {

// Root of every error thrown by the library. The CLI maps the subclasses
// onto distinct exit codes (see ExitCode in pipeline.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Geometry or data too small or too symmetric for the estimator to be defined.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Structurally valid input that violates an invariant (non-monotone axis,
// unknown config key, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& source, std::size_t row, std::size_t column,
             const std::string& what)
      : ValidationError(source + ":" + std::to_string(row) + ":" +
                        std::to_string(column) + ": " + what),
        row_(row),
        column_(column) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

  // Same location, message prefixed with `prefix`.
  ParseError prefixed(const std::string& prefix) const {
    return ParseError(prefix + what(), row_, column_);
  }

 private:
  ParseError(const std::string& message, std::size_t row, std::size_t column)
      : ValidationError(message), row_(row), column_(column) {}

  std::size_t row_;
  std::size_t column_;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class PlanningError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace t1noise
