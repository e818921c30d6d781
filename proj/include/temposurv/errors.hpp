#pragma once

#include <stdexcept>
#include <string>

namespace temposurv {

// Base for everything thrown by the library. Subclasses map onto CLI exit
// codes: config/validation -> 2, numeric -> 3, io -> 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or dimension disagreement between tensors / configs.
struct DimensionError : Error {
  using Error::Error;
};

// Softmax over a fully masked row, empty visit, all-masked instance.
struct MaskError : Error {
  using Error::Error;
};

// Math domain violations: log of non-positive, zero-vector normalize.
struct DomainError : Error {
  using Error::Error;
};

// Bad run configuration (unknown keys, invalid ranges, zero weights).
struct ConfigError : Error {
  using Error::Error;
};

// Malformed input data (records, ontology, checkpoints).
struct ValidationError : Error {
  using Error::Error;
};

// Unknown code / patient id lookups.
struct LookupError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required (divergence).
struct NumericError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace temposurv
