// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace subsearch {

/// Input outside an operation's mathematical domain (bad dimensions, non-finite values).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A request for zero samples or an empty collection where at least one is required.
class EmptyRequestError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Invalid configuration value. `field()` names the offending key when known.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& message, std::string field = {})
      : std::runtime_error(message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Fitness evaluation failed (non-finite value, objective failure, protocol fault).
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The external objective child violated the line protocol.
class ProtocolError : public EvaluationError {
 public:
  using EvaluationError::EvaluationError;
};

/// File system failure; the message always carries the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Should-not-happen numerical state.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace subsearch
