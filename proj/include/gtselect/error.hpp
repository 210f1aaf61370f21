#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gtselect {

enum class ErrorCode {
  kMissingValue,
  kUnparsableCell,
  kTargetNotFound,
  kEmptyFile,
  kInvalidArgument,
  kFractionTooSmall,
  kKTooLarge,
  kSampleTooLarge,
  kSingularSystem,
  kNonFiniteLoss,
  kDimensionMismatch,
  kSpawnFailure,
  kProtocolViolation,
  kTimeout,
  kUndefinedMetric,
  kTooManyPlayers,
  kEmptySelection,
  kConfig,
  kIo,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Cell-level CSV failures keep the offending position (0-based data row,
// 0-based column).
class CellError : public Error {
 public:
  CellError(ErrorCode code, std::size_t row, std::size_t col,
            const std::string& message)
      : Error(code, message), row_(row), col_(col) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

}  // namespace gtselect
