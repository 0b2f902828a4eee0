#pragma once

#include <stdexcept>
#include <string>

namespace ctxd {

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Bad parameters, bad flags, inconsistent configuration.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ExitCode::kConfig, what) {}
};

/// Malformed or misaligned input data, missing artifacts, contract violations
/// on data shape.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::kData, what) {}
};

/// Binary or text format violations; carries the offending location in the
/// message.
class FormatError : public DataError {
 public:
  explicit FormatError(const std::string& what) : DataError(what) {}
};

/// Singular matrices, zero-variance statistics, non-finite values.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ExitCode::kNumeric, what) {}
};

}  // namespace ctxd
