#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace edgespeech {

enum class ErrorCode {
  NotFound,
  UnsupportedFormat,
  CorruptHeader,
  Io,
  TooShort,
  NonColaConfig,
  InvalidRate,
  LengthMismatch,
  InvalidLadder,
  SilentSource,
  RateMismatch,
  EmptyCorpus,
  InvalidConfig,
  ShapeMismatch,
  StaleCache,
  EmptyDataset,
  NonFinite,
  AccumulatorOverflow,
  SilentTarget,
  EmptyInput,
  ArchitectureMismatch,
  InvariantViolation,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

}  // namespace edgespeech
