#pragma once

#include <stdexcept>
#include <string>

namespace dyg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not satisfy a primitive's contract.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, long line = -1)
      : Error(line >= 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

/// Well-formed data that breaks a domain rule (negative timestamp, empty split).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or parameter encountered during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// The gradient-check harness itself could not run (e.g. non-deterministic forward).
class HarnessError : public Error {
 public:
  using Error::Error;
};

}  // namespace dyg
