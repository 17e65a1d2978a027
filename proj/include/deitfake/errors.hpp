#pragma once

#include <stdexcept>
#include <string>

namespace deitfake {

// Shape or extent mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A documented precondition of an operation was violated by the caller.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An object was used in a state that does not permit the operation.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// NaN or Inf produced where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text; carries the 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Well-formed input whose values are not acceptable.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A checkpoint or artifact does not match the configuration it is used with.
class CompatibilityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace deitfake
