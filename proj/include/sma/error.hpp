#pragma once

#include <stdexcept>
#include <string>

namespace sma {

enum class ErrorCode {
  EmptyInput,
  LengthMismatch,
  FlagMismatch,
  ConfigError,
  MissingManifest,
  DuplicateDocId,
  EncoderShapeMismatch,
  NetworkError,
  RateLimited,
  UnsupportedModality,
  NumericalFailure,
  PartialTranscript,
  DegenerateDistribution,
  NoMembers,
  SingleClass,
  MissingGroundTruth,
  MalformedReport,
  IoError,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::FlagMismatch: return "FlagMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::MissingManifest: return "MissingManifest";
    case ErrorCode::DuplicateDocId: return "DuplicateDocId";
    case ErrorCode::EncoderShapeMismatch: return "EncoderShapeMismatch";
    case ErrorCode::NetworkError: return "NetworkError";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::UnsupportedModality: return "UnsupportedModality";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::PartialTranscript: return "PartialTranscript";
    case ErrorCode::DegenerateDistribution: return "DegenerateDistribution";
    case ErrorCode::NoMembers: return "NoMembers";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::MissingGroundTruth: return "MissingGroundTruth";
    case ErrorCode::MalformedReport: return "MalformedReport";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sma
