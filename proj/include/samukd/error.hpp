#pragma once

#include <stdexcept>
#include <string>

namespace samukd {

// Every error raised by the library belongs to exactly one class; the CLI maps
// classes to process exit codes (see exit_code()).
enum class ErrorClass { kConfig = 1, kData = 2, kNumeric = 3, kIo = 4 };

const char* error_class_name(ErrorClass c);

class Error : public std::runtime_error {
 public:
  Error(ErrorClass c, const std::string& what) : std::runtime_error(what), class_(c) {}
  ErrorClass error_class() const noexcept { return class_; }
  int exit_code() const noexcept { return static_cast<int>(class_); }

 private:
  ErrorClass class_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorClass::kConfig, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorClass::kData, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorClass::kNumeric, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorClass::kIo, what) {}
};

// Finer-grained kinds, grouped under the four classes above.
class DimensionError : public NumericError {
 public:
  using NumericError::NumericError;
};
class ContractError : public NumericError {
 public:
  using NumericError::NumericError;
};
class RangeError : public NumericError {
 public:
  using NumericError::NumericError;
};
class InfeasibleError : public NumericError {
 public:
  using NumericError::NumericError;
};
class VocabularyError : public DataError {
 public:
  using DataError::DataError;
};
class LengthError : public DataError {
 public:
  using DataError::DataError;
};
class AggregationError : public DataError {
 public:
  using DataError::DataError;
};
class FormatError : public IoError {
 public:
  using IoError::IoError;
};
class VersionError : public IoError {
 public:
  using IoError::IoError;
};
class CorruptionError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace samukd
