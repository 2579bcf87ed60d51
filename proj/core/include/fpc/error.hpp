#pragma once

#include <stdexcept>
#include <string>

namespace fpc {

// Error categories double as process exit codes for the command-line tool.
enum class ErrorKind : int {
  kConfig = 2,
  kEmptyResult = 3,
  kContract = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

struct EmptyResultError : Error {
  explicit EmptyResultError(const std::string& what)
      : Error(ErrorKind::kEmptyResult, what) {}
};

struct ContractViolation : Error {
  explicit ContractViolation(const std::string& what)
      : Error(ErrorKind::kContract, what) {}
};

const char* error_kind_name(ErrorKind kind);

}  // namespace fpc
