#pragma once

#include <stdexcept>
#include <string>

namespace metairl {

/// Raised when a caller breaks a documented precondition (shape, range, state).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when a numeric quantity becomes non-finite during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration or command-line usage.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure while reading a persisted dataset or checkpoint.
class FormatError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, VersionMismatch, Truncated, Checksum, Malformed };

  FormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Oracle experts failed too often for a task; usually a misconfigured TaskSpec.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) {
    throw ContractViolation(message);
  }
}

}  // namespace metairl
