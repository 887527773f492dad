#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace latent_atlas {

enum class ErrorCode {
  RankDeficient,
  ConvergenceFailure,
  NotOrthonormal,
  EmptySignal,
  DimMismatch,
  Diverged,
  FormatError,
  VersionMismatch,
  BadRange,
  BadTimestep,
  BadOptions,
  ZeroProjection,
  ShapeUnknown,
  BadSpec,
  ParseError,
  ValidationError,
  CorruptArtifact,
  NotFound,
  Conflict,
  IoError,
};

std::string_view error_code_name(ErrorCode code);

/// Every failure in the library surfaces as this exception. `detail()` holds
/// an optional machine-readable qualifier: the violated constraint name for
/// ValidationError, the offending key/line for ParseError.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string detail = {});

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message, std::string detail = {});

}  // namespace latent_atlas
