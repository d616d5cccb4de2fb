#pragma once

#include <stdexcept>
#include <string>

namespace blendnet {

// Root of every error the library raises. The CLI maps UsageError and
// ConfigError to exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

// Raised when training produces a NaN/Inf loss or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class MalformedManifestError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedBlobError : public FormatError {
 public:
  using FormatError::FormatError;
};

class OffsetRangeError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace blendnet
