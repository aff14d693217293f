// prosogest/error.hpp
//
// Every failure in the library is reported as a prosogest::Error carrying an
// ErrorCode, so callers (the CLI in particular) can map kinds to exit codes.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prosogest {

enum class ErrorCode {
  // signal_io
  UnsupportedFormat,
  CorruptHeader,
  EmptyAudio,
  NonMonotonicTime,
  NonUniformRate,
  MalformedRow,
  Io,
  // pitch
  AudioTooShort,
  // prominence
  TooFewSamples,
  DegenerateDimension,
  InsufficientData,
  DimensionMismatch,
  NoPositiveLabels,
  // kinematics
  TooFewFrames,
  EmptyInterval,
  // gesture_hmm
  InsufficientExamples,
  SequenceTooShort,
  // cooccur
  InsufficientClassData,
  // corpus / cli
  InvalidRecipe,
  InvalidConfig,
  MissingModel,
  InvalidArgument,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::EmptyAudio: return "EmptyAudio";
    case ErrorCode::NonMonotonicTime: return "NonMonotonicTime";
    case ErrorCode::NonUniformRate: return "NonUniformRate";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::Io: return "Io";
    case ErrorCode::AudioTooShort: return "AudioTooShort";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::DegenerateDimension: return "DegenerateDimension";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NoPositiveLabels: return "NoPositiveLabels";
    case ErrorCode::TooFewFrames: return "TooFewFrames";
    case ErrorCode::EmptyInterval: return "EmptyInterval";
    case ErrorCode::InsufficientExamples: return "InsufficientExamples";
    case ErrorCode::SequenceTooShort: return "SequenceTooShort";
    case ErrorCode::InsufficientClassData: return "InsufficientClassData";
    case ErrorCode::InvalidRecipe: return "InvalidRecipe";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::MissingModel: return "MissingModel";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace prosogest
