#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace shuntgate {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input or contract violation: bad distributions, malformed
/// records, template slot mismatches.  Maps to CLI exit code 1.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Bad or inconsistent experiment configuration.  Maps to exit code 1.
class ConfigError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Remote backend unreachable, timed out, or returned a server error
/// after the retry budget was spent.  Retryable.  Maps to exit code 2.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Remote backend answered but the payload does not match the wire
/// protocol (shape mismatch, mass far from 1).  Maps to exit code 2.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Training diverged (NaN/inf loss).  Carries the last good parameter
/// checkpoint as serialized JSON.  Maps to exit code 3.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::string last_good_checkpoint)
      : Error(what), checkpoint_(std::move(last_good_checkpoint)) {}
  explicit TrainingError(const std::string& what) : Error(what) {}

  /// Serialized parameters captured at the last finite-loss epoch, if any.
  const std::optional<std::string>& last_good_checkpoint() const { return checkpoint_; }

 private:
  std::optional<std::string> checkpoint_;
};

}  // namespace shuntgate
