#pragma once

#include <stdexcept>
#include <string>

namespace pidon {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, violated precondition or malformed input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, failed factorizations, divergent training.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Incompatible array shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed computation graph (foreign handle, bad root, unsupported op).
class GraphError : public Error {
 public:
  using Error::Error;
};

/// A stored artifact (checkpoint, dataset) does not match what the caller expects.
class ArtifactMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace pidon
