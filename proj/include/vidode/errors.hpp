#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vidode {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: malformed arguments, configs, datasets. Maps to CLI exit 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DatasetError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Corrupt, truncated or version-mismatched checkpoint.
class CheckpointError : public Error {
 public:
  CheckpointError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Training produced a NaN/Inf loss.
class NonFiniteLossError : public Error {
 public:
  using Error::Error;
};

}  // namespace vidode
