#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace felan {

enum class ErrorCode {
  NotPSD,
  NotSPD,
  SparsityViolation,
  InvalidTopology,
  DimensionMismatch,
  GimbalLock,
  InvalidSpec,
  DegenerateVariance,
  AllZero,
  TopologyMismatch,
  ParseError,
  IoError,
  NumericalFailure,
};

std::string_view to_string(ErrorCode code);

/// Every failure the library reports is an Error carrying one of the codes
/// above; callers branch on code(), the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotPSD: return "NotPSD";
    case ErrorCode::NotSPD: return "NotSPD";
    case ErrorCode::SparsityViolation: return "SparsityViolation";
    case ErrorCode::InvalidTopology: return "InvalidTopology";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::GimbalLock: return "GimbalLock";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::AllZero: return "AllZero";
    case ErrorCode::TopologyMismatch: return "TopologyMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace felan
