#pragma once

#include <stdexcept>
#include <string>

namespace setest {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Caller violated a precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Non-finite gradient or loss during optimization.
class TrainingError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

/// Generator parameters are physically inconsistent.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// The requested quantity cannot be recovered from the given observations.
class UnrecoverableError : public Error {
 public:
  using Error::Error;
};

/// Bad magic, version or structure in a binary file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File shorter or longer than its header declares.
class SizeError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Checkpoint holds a different model kind than requested.
class KindError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// CSV is missing a required column.
class ColumnError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace setest
