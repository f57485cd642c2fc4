#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sqaforge {

enum class ErrorCode {
  DegeneratePosition,
  NoMatch,
  InvalidAngle,
  UncoveredPhrase,
  RegroundingFailed,
  EndpointUnavailable,
  MalformedResponse,
  QidMismatch,
  CoverageMismatch,
  DuplicatePrediction,
  LengthMismatch,
  ShapeMismatch,
  NonStochasticRow,
  MalformedGroup,
  CapFired,
  DivergenceDetected,
  ParseError,
  DanglingSceneRef,
  InvariantViolation,
  MissingSection,
  InvalidArgument,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegeneratePosition: return "DegeneratePosition";
    case ErrorCode::NoMatch: return "NoMatch";
    case ErrorCode::InvalidAngle: return "InvalidAngle";
    case ErrorCode::UncoveredPhrase: return "UncoveredPhrase";
    case ErrorCode::RegroundingFailed: return "RegroundingFailed";
    case ErrorCode::EndpointUnavailable: return "EndpointUnavailable";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::QidMismatch: return "QidMismatch";
    case ErrorCode::CoverageMismatch: return "CoverageMismatch";
    case ErrorCode::DuplicatePrediction: return "DuplicatePrediction";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonStochasticRow: return "NonStochasticRow";
    case ErrorCode::MalformedGroup: return "MalformedGroup";
    case ErrorCode::CapFired: return "CapFired";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DanglingSceneRef: return "DanglingSceneRef";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::MissingSection: return "MissingSection";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the library. `details` carries the offending
/// ids, phrases or line numbers when there is more than one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::vector<std::string> details = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        details_(std::move(details)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::vector<std::string>& details() const noexcept { return details_; }

 private:
  ErrorCode code_;
  std::vector<std::string> details_;
};

}  // namespace sqaforge
