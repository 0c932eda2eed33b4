#pragma once

#include <stdexcept>
#include <string>

namespace dancegen {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes:
// invalid input and I/O -> 2, state/compatibility -> 3, numeric failure -> 4.
struct InvalidInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A valid kind of input indexing outside the admissible range, e.g. an audio
// slice running past the clip end.
struct OutOfRangeError : InvalidInputError {
  using InvalidInputError::InvalidInputError;
};

// Tensor or layer dimensions that do not fit together.
struct ShapeError : InvalidInputError {
  using InvalidInputError::InvalidInputError;
};

// API misuse or incompatible persisted state (checkpoint/config mismatch).
struct StateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric breakdown: NaN/Inf gradients, diverging loss.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dancegen
