#pragma once

#include <stdexcept>
#include <string>

namespace wmqd {

/// Base class of every error raised by the library. Each subclass maps to a
/// distinct process exit code so the command-line tool can report failures
/// without inspecting message text.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return 1; }
};

/// Malformed configuration text (syntax, ragged matrices, unknown enums).
class ParseError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

/// Inputs that are well formed but violate a precondition (wrong dimensions,
/// indefinite covariance, out-of-range parameters).
class ValidationError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

/// A matrix that must be strictly stable is not.
class InstabilityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A numerical routine failed to produce an answer meeting its residual bound.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual = 0.0)
      : Error(what), residual_(residual) {}
  int exit_code() const override { return 4; }
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// An iterative method ran out of iterations.
class ConvergenceError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 5; }
};

/// A quantity that must be finite (log-density, statistic) overflowed.
class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 6; }
};

/// The attack leaves the monitored distribution unchanged (KLD <= 0), so no
/// finite detection delay exists.
class UndetectableAttackError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 7; }
};

}  // namespace wmqd
