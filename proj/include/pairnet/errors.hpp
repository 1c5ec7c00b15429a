#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pairnet {

/// Base class for every error raised by the library. `kind()` is a stable,
/// machine-parseable error class used by the CLI.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

/// Invalid configuration value. The message starts with the field name.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error(field + ": " + what), field_(field), detail_(what) {}
  const char* kind() const noexcept override { return "config_error"; }
  const std::string& field() const noexcept { return field_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string field_;
  std::string detail_;
};

/// Malformed container file; carries the byte offset where decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        detail_(what),
        offset_(offset) {}
  const char* kind() const noexcept override { return "format_error"; }
  std::uint64_t offset() const noexcept { return offset_; }
  /// Message without the offset suffix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string detail_;
  std::uint64_t offset_;
};

class DimensionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "dimension_error"; }
};

/// Violated precondition on values (e.g. non-stochastic rows, n = 0).
class ContractError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "contract_error"; }
};

/// AP requested on a label set without positives; the value is undefined.
class UndefinedValueError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "undefined_value"; }
};

class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(path + ": " + what) {}
  const char* kind() const noexcept override { return "io_error"; }
};

class TrainingError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "training_error"; }
};

}  // namespace pairnet
