#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace desk {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An API was called outside its contract.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A configuration value is missing or out of range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A text input could not be parsed. Carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class EncodingError : public Error {
 public:
  using Error::Error;
};

/// A tabular input lacks a required column.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a content rule (unknown label, out-of-range class).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace desk
