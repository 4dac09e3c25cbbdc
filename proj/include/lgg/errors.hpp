#pragma once

#include <stdexcept>
#include <string>

namespace lgg {

// Every error raised by the library derives from Error so callers can map the
// category to an exit code without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value produced or observed.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// API misuse: bad argument range, wrong tape, non-scalar root, ...
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Input data for which the requested quantity is undefined.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Loaded data violates a dataset contract (e.g. class missing from a split).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace lgg
