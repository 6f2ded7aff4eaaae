#pragma once

#include <stdexcept>
#include <string>

namespace tdadur {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or lengths that do not line up, or a missing/forbidden input.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// A value outside the domain of an operation (negative duration, r > 1, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that makes the operation undefined (empty mask, zero sum).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Fewer target frames than positions that each need at least one frame.
class InfeasibleTargetError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace tdadur
