#pragma once

#include <stdexcept>
#include <string>

namespace aoi {

// Parameter set violates one of the documented invariants.
class InvalidConfig : public std::invalid_argument {
 public:
  explicit InvalidConfig(const std::string& what)
      : std::invalid_argument("InvalidConfig: " + what) {}
};

// Value iteration hit its iteration limit before reaching the tolerance.
class NoConvergence : public std::runtime_error {
 public:
  explicit NoConvergence(const std::string& what)
      : std::runtime_error("NoConvergence: " + what) {}
};

// The recorded sup-norm error failed e[t+1] <= alpha * e[t].
class ContractionViolation : public std::logic_error {
 public:
  explicit ContractionViolation(const std::string& what)
      : std::logic_error("ContractionViolation: " + what) {}
};

// An extracted policy broke a structural property that is a theorem
// (threshold in p(C), arg-max-age sampling).
class StructureViolation : public std::logic_error {
 public:
  explicit StructureViolation(const std::string& what)
      : std::logic_error("StructureViolation: " + what) {}
};

class StateSpaceTooLarge : public std::length_error {
 public:
  explicit StateSpaceTooLarge(const std::string& what)
      : std::length_error("StateSpaceTooLarge: " + what) {}
};

// A decision callback asked for something the energy level forbids.
class InfeasibleAction : public std::logic_error {
 public:
  explicit InfeasibleAction(const std::string& what)
      : std::logic_error("InfeasibleAction: " + what) {}
};

// A Q-learning transition record carries an action infeasible in its state.
class MismatchedRecord : public std::invalid_argument {
 public:
  explicit MismatchedRecord(const std::string& what)
      : std::invalid_argument("MismatchedRecord: " + what) {}
};

}  // namespace aoi
