#pragma once

#include <stdexcept>
#include <string>

namespace cband {

// Error taxonomy shared by every module. The kind string is what the CLI
// reports in its machine-readable error JSON, so names are stable.
enum class ErrorKind {
  ParseError,
  TruncatedStream,
  DimensionMismatch,
  DecodeError,
  NoFrames,
  MissingFrameRate,
  UnsupportedFormat,
  ManifestMismatch,
  ManifestMissing,
  ModelLoadError,
  InputTooSmall,
  DegenerateInput,
  ShapeError,
  DivergenceError,
  EmptyInput,
  EmptyLadder,
  ModelFormatError,
  UnderdeterminedError,
  DataIntegrityError,
  InvalidArgument,
  IoError,
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::TruncatedStream: return "TruncatedStream";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::DecodeError: return "DecodeError";
    case ErrorKind::NoFrames: return "NoFrames";
    case ErrorKind::MissingFrameRate: return "MissingFrameRate";
    case ErrorKind::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::ManifestMismatch: return "ManifestMismatch";
    case ErrorKind::ManifestMissing: return "ManifestMissing";
    case ErrorKind::ModelLoadError: return "ModelLoadError";
    case ErrorKind::InputTooSmall: return "InputTooSmall";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::DivergenceError: return "DivergenceError";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::EmptyLadder: return "EmptyLadder";
    case ErrorKind::ModelFormatError: return "ModelFormatError";
    case ErrorKind::UnderdeterminedError: return "UnderdeterminedError";
    case ErrorKind::DataIntegrityError: return "DataIntegrityError";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::IoError: return "IoError";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }
  const char* kind_name() const { return error_kind_name(kind_); }

 private:
  ErrorKind kind_;
};

}  // namespace cband
