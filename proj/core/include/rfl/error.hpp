#pragma once

#include <stdexcept>
#include <string>

namespace rfl {

// Base for everything thrown by the library. Validation errors (bad
// arguments, bad configs) derive from ValidationError so callers can map
// them to a distinct exit code.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : Error {
  using Error::Error;
};

struct ShapeError : ValidationError {
  using ValidationError::ValidationError;
};
struct DomainError : ValidationError {
  using ValidationError::ValidationError;
};
struct ConfigError : ValidationError {
  using ValidationError::ValidationError;
};
struct IndexError : ValidationError {
  using ValidationError::ValidationError;
};

struct PathlossAboveMax : Error {
  using Error::Error;
};
struct GenerationFailure : Error {
  using Error::Error;
};
struct InsufficientFreePixels : Error {
  using Error::Error;
};
struct FormatError : Error {
  using Error::Error;
};
struct NotFound : Error {
  using Error::Error;
};
struct EmptySplit : Error {
  using Error::Error;
};
struct DivergenceError : Error {
  using Error::Error;
};
struct NonFiniteGradient : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

}  // namespace rfl
