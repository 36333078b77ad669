#pragma once

#include <stdexcept>
#include <string>

namespace u2ad {

/// Base for every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Inputs that are well-formed but carry no usable signal (empty ROI, constant image, ...).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// A required artifact or state is missing (checkpoint absent, ensemble incomplete, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class IncompleteEnsembleError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

/// Non-finite loss during optimization.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Monte-Carlo sampling exceeded its pass budget.
class RunawayError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace u2ad
