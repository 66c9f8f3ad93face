#pragma once

#include <stdexcept>
#include <string>

namespace rsoft {

// Base class so callers can catch everything this library throws in one place.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input text or binary. The message names the section or line.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input whose dimensions or contents disagree with each other.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Input data that cannot support the requested computation.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or parameters during training, or an invalid probability
/// vector handed to a numerical routine.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace rsoft
