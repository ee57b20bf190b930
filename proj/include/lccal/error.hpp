#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lccal {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Zero-norm quaternion, empty cloud where a mean is required, and similar.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Euler decomposition requested too close to gimbal lock.
class DegenerateOrientationError : public Error {
 public:
  using Error::Error;
};

/// Input violates a documented precondition (e.g. non-orthonormal rotation).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. backward() on a non-scalar tensor.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary payload. Carries the byte offset where decoding stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Malformed text input (calibration files, serialized transforms, CSV).
class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A refinement stage produced an unusable result.
class CascadeError : public Error {
 public:
  CascadeError(const std::string& what, std::size_t stage)
      : Error("stage " + std::to_string(stage) + ": " + what), stage_(stage) {}

  std::size_t stage() const { return stage_; }

 private:
  std::size_t stage_;
};

}  // namespace lccal
