#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace holo {

/// Base class for every error this library throws.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed expression source. `offset` is the byte offset of the first
/// character that could not be consumed.
class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset(offset) {}
  std::size_t offset;
};

/// An identifier used with call syntax that is not a known function.
class UnknownFunctionError : public SyntaxError {
 public:
  UnknownFunctionError(const std::string& name, std::size_t offset)
      : SyntaxError("unknown function '" + name + "'", offset), name(name) {}
  std::string name;
};

/// Evaluation reached a variable with no binding.
class UnboundVariableError : public Error {
 public:
  explicit UnboundVariableError(const std::string& name)
      : Error("unbound variable '" + name + "'"), name(name) {}
  std::string name;
};

/// Evaluation left the domain of a function (log/sqrt of a negative
/// argument, division by zero, non-finite pow).
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(what) {}
};

/// Adaptive quadrature exceeded its refinement depth limit.
class QuadratureError : public Error {
 public:
  explicit QuadratureError(const std::string& what) : Error(what) {}
};

/// Operation requires a potential but the mode does not carry one.
class NoPotentialError : public Error {
 public:
  explicit NoPotentialError(const std::string& mode_id)
      : Error("mode '" + mode_id + "' has no potential"), mode_id(mode_id) {}
  std::string mode_id;
};

/// A bundle failed structural validation or the commuting-diagram check.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(what) {}
};

/// A loop violates the continuity condition at a transition, or fails to
/// close.
class ContinuityError : public Error {
 public:
  ContinuityError(const std::string& what, double t) : Error(what), t(t) {}
  double t;
};

/// A guard function stays within tolerance of zero over an interval of
/// positive measure, so crossings cannot be isolated.
class AmbiguousCrossingError : public Error {
 public:
  AmbiguousCrossingError(const std::string& what, double t) : Error(what), t(t) {}
  double t;
};

/// Quadrature and potential holonomy disagree beyond tolerance.
class CrossCheckError : public Error {
 public:
  CrossCheckError(const std::string& what, double difference)
      : Error(what), difference(difference) {}
  double difference;
};

/// A convergence schedule too short for the requested estimate.
class InsufficientDataError : public Error {
 public:
  explicit InsufficientDataError(const std::string& what) : Error(what) {}
};

/// A system-definition file that cannot be parsed into a bundle.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(what) {}
};

}  // namespace holo
