#pragma once

#include <stdexcept>
#include <string>

namespace stellar_match {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "error"; }
};

/// Argument outside the documented preconditions.
class InvalidArgument : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "invalid_argument"; }
};

/// The equation of state is evaluated outside the range where
/// P > 0 and 0 < dP/drho < c^2 hold.
class ValidityRangeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "validity_range"; }
};

/// Integration left the admissible state set in a way that is not a
/// classified exit.
class DomainError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "domain"; }
};

/// An iterative procedure (step control, root find, fit) gave up.
class ConvergenceError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "convergence"; }
};

/// Integration ran into a guard (radius cap, no zero found) before the
/// expected terminal event.
class NonTermination : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "non_termination"; }
};

}  // namespace stellar_match
