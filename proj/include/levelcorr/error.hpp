#pragma once

#include <stdexcept>
#include <string>

namespace levelcorr {

/// Base class of all computation failures raised by the library.
/// Bad arguments are reported with std::invalid_argument instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "computation_error"; }
};

/// The adaptive integrator could not keep the step above the floating-point
/// resolution of the path parameter.
class StepSizeUnderflow : public Error {
 public:
  explicit StepSizeUnderflow(double where)
      : Error("step size underflow at path parameter " + std::to_string(where)), where_(where) {}
  double where() const noexcept { return where_; }
  const char* kind() const noexcept override { return "step_size_underflow"; }

 private:
  double where_;
};

/// The integrated trajectory left the solution manifold of the sigma-form
/// equation: the first integral (t s'')^2 + (t s' - s)(t s' - s + 4 s'^2)
/// exceeded its tolerance at |t| = where.
class ResidualDriftError : public Error {
 public:
  ResidualDriftError(double where, double residual)
      : Error("sigma-form residual " + std::to_string(residual) + " exceeds tolerance at t = " +
              std::to_string(where)),
        where_(where),
        residual_(residual) {}
  double where() const noexcept { return where_; }
  double residual() const noexcept { return residual_; }
  const char* kind() const noexcept override { return "residual_drift"; }

 private:
  double where_;
  double residual_;
};

/// The truncated lambda-integral could not be certified; carries what was computed.
class TruncationError : public Error {
 public:
  TruncationError(const std::string& what, double partial_value, double error_estimate)
      : Error(what), partial_(partial_value), err_(error_estimate) {}
  double partial_value() const noexcept { return partial_; }
  double error_estimate() const noexcept { return err_; }
  const char* kind() const noexcept override { return "truncation"; }

 private:
  double partial_;
  double err_;
};

/// A tabulated function is too coarse for the requested operation.
class ResolutionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "insufficient_resolution"; }
};

/// Quadrature or differentiation produced a value violating a structural
/// property (a complex gap probability, a negative density).
class NumericalError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numerical_failure"; }
};

/// A checkpoint does not belong to the run it is being resumed into.
class CheckpointMismatch : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "checkpoint_mismatch"; }
};

}  // namespace levelcorr
