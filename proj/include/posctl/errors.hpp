#pragma once

#include <stdexcept>
#include <string>

namespace posctl {

/// Inconsistent dimensions or malformed structural data (empty control
/// window, mismatched matrix shapes, incompatible time grids).
class StructuralError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Sample grid too coarse for the requested number of modes.
class ResolutionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Discretization parameters that violate a stability or sizing rule.
class ConfigurationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Data or system violate an assumption required by a construction.
class HypothesisError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A planner could not produce a schedule within its limits.
class PlanningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The controllability Gramian is numerically singular.
class ControllabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A search was started from an invalid bracket.
class SetupError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace posctl
