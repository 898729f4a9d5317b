#pragma once

#include <stdexcept>
#include <string>

namespace asad {

/// Error categories double as CLI exit codes.
enum class ErrorCategory : int {
  kUsage = 2,
  kIo = 3,
  kFormat = 4,
  kShape = 5,
  kValidation = 6,
  kNumeric = 7,
};

const char* category_name(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message) : Error(ErrorCategory::kShape, message) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message) : Error(ErrorCategory::kFormat, message) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message)
      : Error(ErrorCategory::kValidation, message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error(ErrorCategory::kIo, message) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message) : Error(ErrorCategory::kNumeric, message) {}
};

}  // namespace asad
