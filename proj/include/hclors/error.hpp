#pragma once

#include <stdexcept>
#include <string>

namespace hclors {

enum class ErrorKind {
  dimension_mismatch,
  duplicate_id,
  non_numeric_cell,
  missing_value,
  empty_matrix,
  negative_position,
  non_integer_position,
  non_finite_input,
  degenerate_design,
  invalid_argument,
  io_failure,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension_mismatch: return "dimension mismatch";
    case ErrorKind::duplicate_id: return "duplicate id";
    case ErrorKind::non_numeric_cell: return "non-numeric cell";
    case ErrorKind::missing_value: return "missing value";
    case ErrorKind::empty_matrix: return "empty matrix";
    case ErrorKind::negative_position: return "negative position";
    case ErrorKind::non_integer_position: return "non-integer position";
    case ErrorKind::non_finite_input: return "non-finite input";
    case ErrorKind::degenerate_design: return "degenerate design";
    case ErrorKind::invalid_argument: return "invalid argument";
    case ErrorKind::io_failure: return "i/o failure";
  }
  return "unknown error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& detail) {
  throw Error(kind, detail);
}

}  // namespace hclors
