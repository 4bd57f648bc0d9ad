#pragma once

#include <stdexcept>
#include <string>

namespace priorclip {

enum class ErrorCategory { config, input, numeric, contract };

// Process exit code used by the CLI for each category.
inline int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::input: return 3;
    case ErrorCategory::numeric: return 4;
    case ErrorCategory::contract: return 5;
  }
  return 1;
}

inline const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return "config";
    case ErrorCategory::input: return "input";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::contract: return "contract";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

/// Shapes of operands do not agree.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(ErrorCategory::input, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorCategory::input, what) {}
};

/// Input is well-formed but mathematically unusable (zero-norm row, ...).
class DegenerateInputError : public Error {
 public:
  explicit DegenerateInputError(const std::string& what) : Error(ErrorCategory::input, what) {}
};

/// NaN/Inf produced, or training diverged.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorCategory::numeric, what) {}
};

/// API misuse, e.g. backward() on a non-scalar.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorCategory::contract, what) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(ErrorCategory::input, "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace priorclip
