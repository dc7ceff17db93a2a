#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pforge {

enum class ErrorCode {
  // corpus
  UnbalancedTag,
  UnknownTag,
  NestedTag,
  EmptyCorpus,
  DuplicateId,
  BadRecord,
  ImageDecode,
  // pretext / codebook
  CountTooLarge,
  InvalidArgument,
  // losses / models
  InvalidTarget,
  ShapeMismatch,
  ResolutionMismatch,
  // trainer / checkpoint
  NonFiniteLoss,
  CheckpointVersionMismatch,
  CheckpointFormat,
  // evaluation
  LengthMismatch,
  EmptyInput,
  MissingField,
  Io,
};

constexpr std::string_view to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::UnbalancedTag: return "UnbalancedTag";
    case ErrorCode::UnknownTag: return "UnknownTag";
    case ErrorCode::NestedTag: return "NestedTag";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::BadRecord: return "BadRecord";
    case ErrorCode::ImageDecode: return "ImageDecode";
    case ErrorCode::CountTooLarge: return "CountTooLarge";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidTarget: return "InvalidTarget";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ResolutionMismatch: return "ResolutionMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::CheckpointVersionMismatch: return "CheckpointVersionMismatch";
    case ErrorCode::CheckpointFormat: return "CheckpointFormat";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Data errors are problems with user-supplied inputs; everything else is a
/// runtime failure. The CLI maps the two onto different exit codes.
constexpr bool is_data_error(ErrorCode c) {
  switch (c) {
    case ErrorCode::UnbalancedTag:
    case ErrorCode::UnknownTag:
    case ErrorCode::NestedTag:
    case ErrorCode::EmptyCorpus:
    case ErrorCode::DuplicateId:
    case ErrorCode::BadRecord:
    case ErrorCode::ImageDecode:
    case ErrorCode::CheckpointVersionMismatch:
    case ErrorCode::CheckpointFormat:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), message_(what) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace pforge
