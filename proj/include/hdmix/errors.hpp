#pragma once

#include <stdexcept>
#include <string>

namespace hdmix {

/// Bad call-site arguments: dimension mismatch, zero sizes, caps exceeded.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Data that violates a structural assumption (coercivity, rank, ranges).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iterative or direct solver failure. Carries the last residual seen.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double last_residual)
      : std::runtime_error(what), last_residual_(last_residual) {}

  double last_residual() const { return last_residual_; }

 private:
  double last_residual_;
};

class UnsupportedKernelError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace hdmix
