#pragma once

#include <stdexcept>
#include <string>

namespace gridtopo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: schema violations, broken invariants, bad configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: singular systems, non-convergence at ground truth,
/// degenerate importance-sampling ensembles.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Structurally singular admittance system (an energized terminal without a
/// conductive path to the source).
class StructuralError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace gridtopo
