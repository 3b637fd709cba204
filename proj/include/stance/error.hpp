#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stance {

enum class ErrorCode {
  MalformedInput,
  OrphanTweet,
  MultipleRoots,
  CycleDetected,
  UnknownId,
  MissingResource,
  NegativeDelta,
  NonFiniteLikelihood,
  EmptyHistory,
  OptimizationDiverged,
  DimensionMismatch,
  UnlabelledNode,
  ShapeMismatch,
  NonFiniteLoss,
  EmptyMask,
  ZeroCount,
  TooFewEvents,
  LengthMismatch,
  UnknownFeature,
  InvalidConfig,
  Io,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedInput: return "MalformedInput";
    case ErrorCode::OrphanTweet: return "OrphanTweet";
    case ErrorCode::MultipleRoots: return "MultipleRoots";
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::MissingResource: return "MissingResource";
    case ErrorCode::NegativeDelta: return "NegativeDelta";
    case ErrorCode::NonFiniteLikelihood: return "NonFiniteLikelihood";
    case ErrorCode::EmptyHistory: return "EmptyHistory";
    case ErrorCode::OptimizationDiverged: return "OptimizationDiverged";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::UnlabelledNode: return "UnlabelledNode";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::ZeroCount: return "ZeroCount";
    case ErrorCode::TooFewEvents: return "TooFewEvents";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::UnknownFeature: return "UnknownFeature";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

// All library failures surface as this one exception type; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace stance
