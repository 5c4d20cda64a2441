#pragma once

#include <stdexcept>
#include <string>

namespace dpt {

// Error taxonomy shared by the library and the C API / CLI exit codes:
//   MissingArtifactError -> 2, ConfigError/InputError/ParseError -> 3,
//   NumericError -> 4, anything else -> 1.

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration value or spec (bad dimensions, bad ranges, unknown keys).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Caller violated an operation contract (shape mismatch, index out of range).
class InputError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, non-PSD matrices, training or sampling blow-ups.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents; message carries the line number where known.
class ParseError : public Error {
 public:
  using Error::Error;
};

// A referenced file or checkpoint does not exist.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

}  // namespace dpt
