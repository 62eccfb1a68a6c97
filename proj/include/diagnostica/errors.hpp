#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace diagnostica {

/// Base of every error raised by the library. `code()` is a stable
/// machine-readable identifier; the gateway copies it into error envelopes.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define DIAGNOSTICA_ERROR(Name, Code)                                  \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& message) : Error(Code, message) {} \
  }

DIAGNOSTICA_ERROR(SchemaError, "schema_error");
DIAGNOSTICA_ERROR(ValidationError, "validation_error");
DIAGNOSTICA_ERROR(IntegrityError, "integrity_error");
DIAGNOSTICA_ERROR(ShapeError, "shape_error");
DIAGNOSTICA_ERROR(ConfigError, "config_error");
DIAGNOSTICA_ERROR(DegenerateSeriesError, "degenerate_series");
DIAGNOSTICA_ERROR(ProtocolError, "protocol_error");
DIAGNOSTICA_ERROR(UndefinedQuality, "undefined_quality");
DIAGNOSTICA_ERROR(NotFoundError, "not_found");
DIAGNOSTICA_ERROR(InfrastructureError, "infrastructure_error");

#undef DIAGNOSTICA_ERROR

/// Malformed tabular input. `row()` is the 1-based data row (header excluded),
/// 0 when the problem is not tied to a row.
class FormatError : public Error {
 public:
  FormatError(std::size_t row, const std::string& message)
      : Error("format_error", message), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Malformed triple stream; `line()` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error("parse_error", "line " + std::to_string(line) + ": " + message), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class CycleError : public Error {
 public:
  CycleError(std::string cycle, const std::string& message)
      : Error("cycle_error", message), cycle_(std::move(cycle)) {}
  /// One offending cycle rendered as "a -> b -> a".
  const std::string& cycle() const noexcept { return cycle_; }

 private:
  std::string cycle_;
};

}  // namespace diagnostica
