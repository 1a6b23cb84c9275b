#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ecal {

/// Precondition violation on user-supplied values (non-finite logits,
/// non-positive temperature, label out of range, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The expectation-consistency target cannot be met by any temperature.
class UnsatisfiableTarget : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative solver exhausted its budget or hit a numerical breakdown.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Always carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace ecal
