#pragma once

#include <stdexcept>
#include <string>

namespace fasrec {

// Base of every error thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand dimensions disagree.
struct ShapeError : Error {
  using Error::Error;
};

// A switching schedule violates the one-antenna-per-port rule.
struct ScheduleError : Error {
  using Error::Error;
};

struct BoundsError : Error {
  using Error::Error;
};

// Binary file has a wrong magic, version or truncated header.
struct FormatError : Error {
  using Error::Error;
};

struct ChecksumError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// Training produced a non-finite loss.
struct DivergenceError : Error {
  DivergenceError(const std::string& what, std::size_t epoch_index)
      : Error(what), epoch(epoch_index) {}
  std::size_t epoch;
};

// Invalid configuration value; `field` names the offending key.
struct ConfigError : Error {
  ConfigError(std::string field_name, const std::string& what)
      : Error(field_name + ": " + what), field(std::move(field_name)) {}
  std::string field;
};

// Malformed text input; `line` is 1-based.
struct ParseError : Error {
  ParseError(std::size_t line_number, const std::string& what)
      : Error("line " + std::to_string(line_number) + ": " + what), line(line_number) {}
  std::size_t line;
};

}  // namespace fasrec
