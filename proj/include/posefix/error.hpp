#pragma once

#include <stdexcept>
#include <string>

namespace posefix {

enum class ErrorCategory {
  invalid_argument,
  io,
  schema,
  precondition,
  diverged,
  internal,
};

const char* to_string(ErrorCategory category);

// Every failure raised by the core library carries a category so the C API
// can map it onto a stable status code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

// Raised when an error type cannot be synthesized for a joint (missing flip
// partner, no neighbor anchors). Callers resample the type.
class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& what)
      : Error(ErrorCategory::precondition, what) {}
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& what) {
  throw Error(category, what);
}

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(ErrorCategory::invalid_argument, what);
}

}  // namespace posefix
