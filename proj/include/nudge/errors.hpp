#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nudge {

// Base of every error the library throws on a contract failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ContractViolation : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

class UnsupportedFormat : public Error {
 public:
  UnsupportedFormat(std::string field, const std::string& what)
      : Error(what), field_(std::move(field)) {}
  /// Name of the offending header field or tag ("sample_rate", "version", ...).
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class CorruptModel : public Error {
 public:
  using Error::Error;
};

class SplitTooSmall : public Error {
 public:
  using Error::Error;
};

class SequencingError : public Error {
 public:
  using Error::Error;
};

class MalformedFrame : public Error {
 public:
  MalformedFrame(std::size_t offset, const std::string& what)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class DeviceUnreachable : public Error {
 public:
  using Error::Error;
};

class DeviceRejected : public Error {
 public:
  DeviceRejected(int reason, const std::string& what) : Error(what), reason_(reason) {}
  int reason() const noexcept { return reason_; }

 private:
  int reason_;
};

class PersistedStateError : public Error {
 public:
  using Error::Error;
};

class SchemaViolation : public Error {
 public:
  using Error::Error;
};

class StartupError : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

struct FieldError {
  std::string field;
  std::string message;
};

// Configuration rejected by validation; carries every offending field.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<FieldError> errors)
      : Error(summarize(errors)), errors_(std::move(errors)) {}
  const std::vector<FieldError>& errors() const noexcept { return errors_; }

 private:
  static std::string summarize(const std::vector<FieldError>& errors) {
    std::string s = "invalid configuration";
    for (const auto& e : errors) s += "; " + e.field + ": " + e.message;
    return s;
  }
  std::vector<FieldError> errors_;
};

}  // namespace nudge
