#include "latent_atlas/error.hpp"

namespace latent_atlas {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::NotOrthonormal: return "NotOrthonormal";
    case ErrorCode::EmptySignal: return "EmptySignal";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::BadRange: return "BadRange";
    case ErrorCode::BadTimestep: return "BadTimestep";
    case ErrorCode::BadOptions: return "BadOptions";
    case ErrorCode::ZeroProjection: return "ZeroProjection";
    case ErrorCode::ShapeUnknown: return "ShapeUnknown";
    case ErrorCode::BadSpec: return "BadSpec";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::CorruptArtifact: return "CorruptArtifact";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::Conflict: return "Conflict";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message, std::string detail)
    : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

void fail(ErrorCode code, const std::string& message, std::string detail) {
  throw Error(code, message, std::move(detail));
}

}  // namespace latent_atlas
