#pragma once

#include <stdexcept>
#include <string>

namespace pegamm {

/// Input or parameter set violates a documented invariant.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure failed (non-PD matrix, Riccati blow-up, bracketing).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pegamm
