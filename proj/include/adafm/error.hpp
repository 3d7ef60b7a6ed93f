#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace adafm {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration (bad k, rho out of range, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Dimension or coordinate mismatch between a model and its inputs.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A user or item id outside the encoder's tables.
class IdRangeError : public Error {
 public:
  using Error::Error;
};

/// A (user, item) pair or token that is not present in a dataset.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain of a mathematical helper.
class RangeError : public Error {
 public:
  using Error::Error;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

class MergeError : public Error {
 public:
  using Error::Error;
};

class EmptyDatasetError : public Error {
 public:
  using Error::Error;
};

class BoostingError : public Error {
 public:
  using Error::Error;
};

/// A parameter became non-finite during training.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input (dataset or model file). Carries the 1-based line
/// number of the offending line, or 0 when the error is not tied to a line.
class FormatError : public Error {
 public:
  FormatError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace adafm
