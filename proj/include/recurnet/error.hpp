#pragma once

#include <stdexcept>
#include <string>

namespace recurnet {

enum class ErrorKind {
  kValidation,
  kMissingFile,
  kMissingModality,
  kShapeMismatch,
  kNonBinaryMask,
  kUnknownLabel,
  kFormat,
  kIo,
  kDivergence,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library; `kind()` tells callers which
// contract was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // Errors caused by bad user input rather than a failure while running.
  bool is_validation() const noexcept {
    return kind_ != ErrorKind::kIo && kind_ != ErrorKind::kDivergence;
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorKind::kValidation, message);
}

}  // namespace recurnet
