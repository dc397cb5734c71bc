#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fdrbound {

// Every failure the library reports carries one of these kinds so callers
// (and the CLI exit-code mapping) can branch without parsing messages.
enum class ErrorKind {
  invalid_argument,
  missing_file,
  duplicate_key,
  no_parsable_rows,
  parse_error,
  empty_sample,
  no_discoveries,
  infeasible_extrapolation,
  dimension_mismatch,
  misaligned_months,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::missing_file: return "missing_file";
    case ErrorKind::duplicate_key: return "duplicate_key";
    case ErrorKind::no_parsable_rows: return "no_parsable_rows";
    case ErrorKind::parse_error: return "parse_error";
    case ErrorKind::empty_sample: return "empty_sample";
    case ErrorKind::no_discoveries: return "no_discoveries";
    case ErrorKind::infeasible_extrapolation: return "infeasible_extrapolation";
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::misaligned_months: return "misaligned_months";
  }
  return "unknown";
}

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(ErrorKind::invalid_argument, message);
}

}  // namespace detail
}  // namespace fdrbound
