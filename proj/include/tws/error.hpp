#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tws {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "dimension"; }
};

/// Malformed input to a constructor (bad index, duplicate entry, bad shape).
class ConstructionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "construction"; }
};

/// Input that violates a documented precondition (marginals, costs, params).
class ValidationError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "validation"; }
};

class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t line)
      : Error(line ? msg + " (line " + std::to_string(line) + ")" : msg), line_(line) {}
  std::size_t line() const noexcept { return line_; }
  const char* kind() const noexcept override { return "parse"; }

 private:
  std::size_t line_;
};

/// A value left the representable range (overflow of e^u, nonpositive
/// marginal from cancellation, ...).
class NumericRangeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numeric_range"; }
};

/// The requested accuracy would push max(C)/gamma past the double-precision
/// envelope of the A + 11^T kernel split.
class PrecisionEnvelopeError : public Error {
 public:
  PrecisionEnvelopeError(const std::string& msg, double min_epsilon)
      : Error(msg), min_epsilon_(min_epsilon) {}
  double min_epsilon() const noexcept { return min_epsilon_; }
  const char* kind() const noexcept override { return "precision_envelope"; }

 private:
  double min_epsilon_;
};

class FactorizationError : public Error {
 public:
  FactorizationError(const std::string& msg, std::size_t pivot)
      : Error(msg), pivot_(pivot) {}
  /// Elimination step (position in the permuted order) of the failing pivot.
  std::size_t pivot() const noexcept { return pivot_; }
  const char* kind() const noexcept override { return "factorization"; }

 private:
  std::size_t pivot_;
};

/// Dense materialization requested above the configured size cap.
class CapacityError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "capacity"; }
};

/// Exact LP solver exhausted its pivot budget.
class StallError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "stall"; }
};

}  // namespace tws
