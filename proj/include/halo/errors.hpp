#pragma once

#include <stdexcept>
#include <string>

namespace halo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Invalid user configuration (bad flag, bad JSON value, size cap exceeded).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Malformed dataset on disk; messages carry file and line context.
class DataError : public Error {
public:
  using Error::Error;
};

/// Non-finite values, singular systems and similar numeric failures.
class NumericError : public Error {
public:
  using Error::Error;
};

}  // namespace halo
