#pragma once

#include <stdexcept>
#include <string>

namespace ncgl {

/// Bad argument: shape mismatch, out-of-range label, malformed configuration.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Mathematical domain violation, e.g. KL divergence without absolute continuity.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// An operation was called on an input outside its stated precondition
/// (rank-deficient channel where an inverse is required, and similar).
class PreconditionViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Instance for which the requested quantity is undefined (P == Q and the like).
class DegenerateInstance : public PreconditionViolation {
 public:
  using PreconditionViolation::PreconditionViolation;
};

/// Non-finite values surfaced during optimization.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed external file (IDX, checkpoint, snapshot).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ncgl
