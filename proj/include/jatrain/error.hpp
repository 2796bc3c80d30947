// error.hpp
//
// Exception types shared by the jatrain modules. Everything derives from
// jatrain::Error so callers at the service boundary can catch one type and
// map it to an HTTP status or a CLI exit code.

#pragma once

#include <stdexcept>
#include <string>

namespace jatrain {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A configuration value violates its invariant. field() names the offender.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error("invalid " + field + ": " + what), field_(std::move(field)), reason_(what) {}

  const std::string& field() const noexcept { return field_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string field_;
  std::string reason_;
};

/// Gaze samples arrived out of time order (corrupted stream).
class OrderingError : public Error {
 public:
  using Error::Error;
};

/// Input submitted to a session that has already terminated.
class SessionClosedError : public Error {
 public:
  using Error::Error;
};

/// Operation not valid in the object's current state.
class IllegalStateError : public Error {
 public:
  using Error::Error;
};

/// Bad caller-supplied data (empty samples, mismatched lengths, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Persisted data failed schema validation or could not be parsed.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace jatrain
