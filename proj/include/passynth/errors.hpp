#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace passynth {

enum class ErrorCode {
  kNonSquare,
  kDimensionMismatch,
  kNotHurwitz,
  kSingularSystem,
  kNotStabilizable,
  kNotDetectable,
  kNoConvergence,
  kNotStabilizing,
  kEqualityInconsistent,
  kTooManyVertices,
  kInvalidArgument,
  kSeedNotPassivating,
  kEmptyRegion,
  kDegenerateF,
  kInfeasibleStart,
  kStepCollapse,
  kDimensionUnsupported,
  kParse,
  kIo,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonSquare: return "NonSquare";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNotHurwitz: return "NotHurwitz";
    case ErrorCode::kSingularSystem: return "SingularSystem";
    case ErrorCode::kNotStabilizable: return "NotStabilizable";
    case ErrorCode::kNotDetectable: return "NotDetectable";
    case ErrorCode::kNoConvergence: return "NoConvergence";
    case ErrorCode::kNotStabilizing: return "NotStabilizing";
    case ErrorCode::kEqualityInconsistent: return "EqualityInconsistent";
    case ErrorCode::kTooManyVertices: return "TooManyVertices";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kSeedNotPassivating: return "SeedNotPassivating";
    case ErrorCode::kEmptyRegion: return "EmptyRegion";
    case ErrorCode::kDegenerateF: return "DegenerateF";
    case ErrorCode::kInfeasibleStart: return "InfeasibleStart";
    case ErrorCode::kStepCollapse: return "StepCollapse";
    case ErrorCode::kDimensionUnsupported: return "DimensionUnsupported";
    case ErrorCode::kParse: return "Parse";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable code next to the message.
class SynthError : public std::runtime_error {
 public:
  SynthError(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace passynth
