#pragma once

#include <stdexcept>
#include <string>

namespace qsp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Solver breakdown, non-convergence, degeneracy (CLI exit code 3).
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

class NoSteadyState : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

class NoLocalBranch : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

class NotBracketed : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

class NotDivergent : public NumericalFailure {
 public:
  using NumericalFailure::NumericalFailure;
};

}  // namespace qsp
