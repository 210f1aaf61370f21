#include "gtselect/error.hpp"

namespace gtselect {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingValue: return "MissingValue";
    case ErrorCode::kUnparsableCell: return "UnparsableCell";
    case ErrorCode::kTargetNotFound: return "TargetNotFound";
    case ErrorCode::kEmptyFile: return "EmptyFile";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kFractionTooSmall: return "FractionTooSmall";
    case ErrorCode::kKTooLarge: return "KTooLarge";
    case ErrorCode::kSampleTooLarge: return "SampleTooLarge";
    case ErrorCode::kSingularSystem: return "SingularSystem";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kSpawnFailure: return "SpawnFailure";
    case ErrorCode::kProtocolViolation: return "ProtocolViolation";
    case ErrorCode::kTimeout: return "Timeout";
    case ErrorCode::kUndefinedMetric: return "UndefinedMetric";
    case ErrorCode::kTooManyPlayers: return "TooManyPlayers";
    case ErrorCode::kEmptySelection: return "EmptySelection";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

}  // namespace gtselect
