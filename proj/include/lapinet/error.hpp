#pragma once

#include <stdexcept>
#include <string>

namespace lapinet {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or parameter shapes do not match.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Element count overflows the index range or a dimension is not positive.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// Convolution/pooling geometry does not produce an integral output size.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (unknown keys, unsupported builder arguments, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid data (out-of-range label, empty presence mask, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (bad magic, truncation, ...).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure (unwritable path, missing file).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Numerical cross-check failed (kernel variants disagree beyond tolerance).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace lapinet
