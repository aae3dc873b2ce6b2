#pragma once

#include <stdexcept>
#include <string>

namespace miph {

// Bad arguments, malformed files, dimension mismatches. Maps to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public InputError {
 public:
  using InputError::InputError;
};

// Underflow, overflow, singular systems, non-convergence. Maps to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularMatrixError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace miph
