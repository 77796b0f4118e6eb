// Error hierarchy shared by every sdsnn module.
//
// Each category maps onto one CLI exit code so that tools can report failures
// without inspecting message text.
#pragma once

#include <stdexcept>
#include <string>

namespace sdsnn {

enum class ExitCode : int {
  ok = 0,
  validation = 2,
  data_format = 3,
  numeric = 4,
  integrity = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Shape or rank disagreement between operands.
struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error(ExitCode::validation, "dimension error: " + w) {}
};

/// Call made in the wrong lifecycle state (missing forward context, eval-mode backward, ...).
struct StateError : Error {
  explicit StateError(const std::string& w) : Error(ExitCode::validation, "state error: " + w) {}
};

struct ArgumentError : Error {
  explicit ArgumentError(const std::string& w) : Error(ExitCode::validation, "argument error: " + w) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ExitCode::validation, "configuration error: " + w) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& w) : Error(ExitCode::validation, "parse error: " + w) {}
};

/// Non-finite values or a numerically singular factorization.
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ExitCode::numeric, "numeric error: " + w) {}
};

/// Malformed dataset, log or checkpoint bytes.
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error(ExitCode::data_format, "format error: " + w) {}
};

struct IntegrityError : Error {
  explicit IntegrityError(const std::string& w) : Error(ExitCode::integrity, "integrity error: " + w) {}
};

/// Signals that every point of a search space has been evaluated.
struct SpaceExhausted : Error {
  SpaceExhausted() : Error(ExitCode::ok, "search space exhausted") {}
};

}  // namespace sdsnn
