#include "tailbalance/error.hpp"

namespace tailbalance {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kMalformedFile: return "malformed-file";
    case ErrorCode::kMalformedRecord: return "malformed-record";
    case ErrorCode::kNumericFailure: return "numeric-failure";
    case ErrorCode::kDegenerateFilter: return "degenerate-filter";
    case ErrorCode::kUnavailableTrace: return "unavailable-trace";
    case ErrorCode::kUndefinedCorrelation: return "undefined-correlation";
    case ErrorCode::kSweepFailed: return "sweep-failed";
    case ErrorCode::kIo: return "io-error";
  }
  return "unknown";
}

}  // namespace tailbalance
