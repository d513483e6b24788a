#pragma once

#include <stdexcept>
#include <string>

namespace cegm {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents disagree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced or consumed, or a numerically undefined request.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value or malformed input file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or mismatched on-disk artifact (checkpoint, CSV).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace cegm
