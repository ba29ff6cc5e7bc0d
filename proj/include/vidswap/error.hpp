#pragma once

#include <stdexcept>
#include <string>

namespace vidswap {

/// Base for all errors raised by the library. The CLI maps UserError
/// subclasses to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input supplied by the caller: configs, files, arguments.
class UserError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public UserError {
 public:
  using UserError::UserError;
};

class FormatError : public UserError {
 public:
  using UserError::UserError;
};

class InvalidKeypointError : public UserError {
 public:
  using UserError::UserError;
};

class IngestionError : public UserError {
 public:
  using UserError::UserError;
};

class SamplingError : public UserError {
 public:
  using UserError::UserError;
};

class FilesystemError : public UserError {
 public:
  using UserError::UserError;
};

/// Probability outside the open interval (0, 1) handed to a BCE loss.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Unrecoverable numeric failure during training (NaN / Inf loss).
class TrainingFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace vidswap
