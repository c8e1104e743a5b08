#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hseg {

/// Base class of every error thrown by the library. The CLI maps subclasses
/// to its exit-code contract (2 usage/config, 3 I/O, 4 numerical).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched tensor/map shapes between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Spatial geometry that cannot be realized (odd pool input, non-exact
/// convolution output size, patch larger than image, ...).
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or unknown configuration key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// API misuse (non-scalar loss, empty dataset, re-running backward, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content. Carries the byte offset where parsing failed
/// when it is known, -1 otherwise.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg, std::int64_t byte_offset = -1)
      : Error(byte_offset >= 0 ? msg + " (byte offset " + std::to_string(byte_offset) + ")"
                               : msg),
        offset_(byte_offset) {}

  std::int64_t byte_offset() const { return offset_; }

 private:
  std::int64_t offset_;
};

/// Filesystem-level failure (missing file, unwritable directory).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure during training; carries the global step index.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& msg, long step)
      : Error(msg + " (step " + std::to_string(step) + ")"), step_(step) {}

  long step() const { return step_; }

 private:
  long step_;
};

/// Non-finite value produced by a tensor operation (debug-build guard).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A quantity with no defined value: empty point set for a surface
/// distance, zero-variance correlation, ratio with a zero denominator.
class UndefinedValueError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent ensemble members (mismatched output shapes).
class EnsembleError : public Error {
 public:
  using Error::Error;
};

}  // namespace hseg
