#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace affgr {

enum class ErrorCode {
  MalformedTags,
  MalformedAnswer,
  UnknownKey,
  MissingKey,
  DuplicateKey,
  MalformedNumber,
  OutOfBounds,
  InvalidBox,
  EmptyGroup,
  MismatchedGroup,
  Overflow,
  PositiveLogProb,
  DimensionMismatch,
  EmptyMask,
  OracleFailure,
  EmptySet,
  ZeroUnion,
  InvalidCamera,
  InvalidArgument,
  NoFeasibleGrasp,
  Io,
  Format,
};

/// Stable name used in JSON output and by foreign-language callers.
constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedTags: return "MalformedTags";
    case ErrorCode::MalformedAnswer: return "MalformedAnswer";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::MissingKey: return "MissingKey";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::MalformedNumber: return "MalformedNumber";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::InvalidBox: return "InvalidBox";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::MismatchedGroup: return "MismatchedGroup";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::PositiveLogProb: return "PositiveLogProb";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::OracleFailure: return "OracleFailure";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::ZeroUnion: return "ZeroUnion";
    case ErrorCode::InvalidCamera: return "InvalidCamera";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NoFeasibleGrasp: return "NoFeasibleGrasp";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Format: return "Format";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace affgr
