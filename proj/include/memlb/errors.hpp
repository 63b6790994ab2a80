#pragma once

#include <stdexcept>
#include <string>

namespace memlb {

// Bad argument values (non-positive means, SCV <= 1, malformed PH, ...).
class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A scheme that needs a capacity A was given none.
class MissingParameter : public InvalidParameter {
 public:
  using InvalidParameter::InvalidParameter;
};

// Operation applied to a memory scheme it does not describe.
class WrongScheme : public InvalidParameter {
 public:
  using InvalidParameter::InvalidParameter;
};

// Input outside the mathematical domain of the operation (w < 0, bad index).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Load outside [0, 1).
class OutOfRange : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// lambda * E[G] >= 1.
class InstabilityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class UnsupportedDistribution : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed solver state (e.g. a non-monotone tail sequence).
class InvalidState : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Evaluation beyond the solved workload grid.
class ExtrapolationError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Iterative solver gave up; carries the last residual.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// Simulator audit mode found a broken dispatcher invariant.
class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace memlb
