#pragma once

#include <stdexcept>
#include <string>

namespace qtherm {

/// Invalid user input: bad configuration values, negative couplings, etc.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure failed to converge or a truncation guard tripped.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Requested basis would exceed the configured memory budget.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Internal consistency violation (e.g. negative occupations beyond rounding).
class NumericalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace qtherm
