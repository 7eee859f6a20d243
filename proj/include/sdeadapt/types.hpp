#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace sdeadapt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised when a configuration cannot be honoured, e.g. a truncation level
/// that falls outside the domain of the envelope inverse.
class ConfigurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by numeric routines that fail to bracket or converge.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when both Newton and the fixed-point fallback fail in an implicit step.
class ImplicitSolveError : public NumericError {
 public:
  ImplicitSolveError(const std::string& what, double residual)
      : NumericError(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

}  // namespace sdeadapt
