#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace semgate {

/// Caller-supplied data violates a precondition or a type invariant.
/// `field()` names the offending input (e.g. "s", "rewards[3]", "symbol WBTN").
class DomainError : public std::invalid_argument {
 public:
  DomainError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// An external service could not be reached or answered with a transport-level failure.
/// Retryable; never converted into a score.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A service answered, but no usable value could be extracted after the allowed re-ask,
/// or retries were exhausted. The affected sample is excluded, never defaulted.
class UnavailableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Replay log has fewer recorded outputs than requested.
class ReplayExhaustedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace semgate
