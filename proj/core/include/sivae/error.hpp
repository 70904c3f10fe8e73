#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sivae {

enum class ErrorCode {
  UnbalancedBrackets,
  EmptyLabel,
  UnknownTag,
  MalformedTree,
  MalformedTemplate,
  EmptySequence,
  ModeMismatch,
  DimensionMismatch,
  NonFiniteInput,
  NonFiniteGradient,
  CheckpointMismatch,
  Io,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so that
// callers (the CLI in particular) can branch without parsing messages.
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
    case ErrorCode::UnbalancedBrackets: return "UnbalancedBrackets";
    case ErrorCode::EmptyLabel: return "EmptyLabel";
    case ErrorCode::UnknownTag: return "UnknownTag";
    case ErrorCode::MalformedTree: return "MalformedTree";
    case ErrorCode::MalformedTemplate: return "MalformedTemplate";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::ModeMismatch: return "ModeMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::CheckpointMismatch: return "CheckpointMismatch";
    case ErrorCode::Io: return "Io";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace sivae
