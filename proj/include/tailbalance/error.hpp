#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tailbalance {

enum class ErrorCode {
  kInvalidArgument,
  kMalformedFile,
  kMalformedRecord,
  kNumericFailure,
  kDegenerateFilter,
  kUnavailableTrace,
  kUndefinedCorrelation,
  kSweepFailed,
  kIo,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so that
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorCode::kInvalidArgument, what);
}

}  // namespace tailbalance
