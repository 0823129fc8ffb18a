#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gsc {

/// Input data that violates the network model (bad schema, bad values,
/// disconnected graph). The CLI maps these to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed case text. `line()` is 1-based; 0 when unknown.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : ValidationError(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Iteration failure, non-finite state or a degenerate numerical object.
/// The CLI maps these to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gsc
