#pragma once

#include <stdexcept>
#include <string>

namespace mfl {

// Exit codes used by the CLI: 1 usage/config, 2 invariant or bound violation,
// 3 numerical failure.
enum class ErrorKind { Config = 1, Violation = 2, Numerical = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::Numerical, what) {}
};

class ViolationError : public Error {
 public:
  explicit ViolationError(const std::string& what) : Error(ErrorKind::Violation, what) {}
};

}  // namespace mfl
