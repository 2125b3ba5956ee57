#pragma once

#include <stdexcept>
#include <string>

namespace lanemap {

enum class ErrorCode {
  invalid_input,
  degenerate_geometry,
  ambiguous_direction,
  spec_error,
  config_error,
  parse_error,
  format_error,
  version_error,
  too_few_points,
  out_of_domain,
  no_overlap,
  stage_failure,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_input: return "InvalidInput";
    case ErrorCode::degenerate_geometry: return "DegenerateGeometry";
    case ErrorCode::ambiguous_direction: return "AmbiguousDirection";
    case ErrorCode::spec_error: return "SpecError";
    case ErrorCode::config_error: return "ConfigError";
    case ErrorCode::parse_error: return "ParseError";
    case ErrorCode::format_error: return "FormatError";
    case ErrorCode::version_error: return "VersionError";
    case ErrorCode::too_few_points: return "TooFewPoints";
    case ErrorCode::out_of_domain: return "OutOfDomain";
    case ErrorCode::no_overlap: return "NoOverlap";
    case ErrorCode::stage_failure: return "StageFailure";
  }
  return "Unknown";
}

/// Base of every error thrown by the library. The code names the failure
/// class so callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Parse failures carry the 1-based line number of the offending record
/// (0 when not line oriented).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(ErrorCode::parse_error,
              line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace lanemap
