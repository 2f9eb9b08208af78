#pragma once

#include <stdexcept>
#include <string>

namespace abflux {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Evaluation at the flux line q = 0.
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// Adaptive step controller underflowed or produced non-finite values.
class StepFailure : public Error {
 public:
  using Error::Error;
};

/// Consecutive angle samples too far apart to unwrap unambiguously.
class BranchError : public Error {
 public:
  using Error::Error;
};

/// F(s, x1, x2) evaluated where sqrt(...) + x1 <= 0.
class DenominatorVanishes : public Error {
 public:
  using Error::Error;
};

/// Fixed-point iteration exhausted its budget.
class NoConvergence : public Error {
 public:
  using Error::Error;
};

/// A tail/limit estimate is not yet settled (e.g. large tail variance).
class NotConverged : public Error {
 public:
  using Error::Error;
};

class NoOverlap : public Error {
 public:
  using Error::Error;
};

/// Result changed too much under grid refinement.
class GridTooCoarse : public Error {
 public:
  using Error::Error;
};

class DegenerateGap : public Error {
 public:
  using Error::Error;
};

class GridMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace abflux
