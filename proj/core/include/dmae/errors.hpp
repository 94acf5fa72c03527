#pragma once

#include <stdexcept>
#include <string>

namespace dmae {

// Base for every error raised by the library. The CLI maps the subclasses onto
// exit codes (parameter/data/shape/contract -> 2, numerical -> 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid hyperparameter or argument value.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Malformed or non-finite input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Incompatible matrix or model dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Divergence, singular systems, non-finite objectives.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A precondition between two objects was violated (e.g. a stale density-ratio fit).
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace dmae
