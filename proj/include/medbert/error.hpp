#pragma once

#include <stdexcept>
#include <string>

namespace medbert {

// Bad input: malformed files, violated preconditions, inconsistent configs.
// The CLI maps this to exit code 1; every other exception maps to 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed record in a line-oriented file.
class FormatError : public ValidationError {
 public:
  FormatError(std::size_t line, const std::string& field, const std::string& what)
      : ValidationError("line " + std::to_string(line) + ": field '" + field + "': " + what),
        line_(line),
        field_(field) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

// A metric that has no value for the given input (e.g. AUROC with one class).
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// NaN or Inf produced by a numerical op.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace medbert
