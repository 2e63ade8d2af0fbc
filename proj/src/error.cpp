#include "edgespeech/error.hpp"

namespace edgespeech {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::NonColaConfig: return "NonColaConfig";
    case ErrorCode::InvalidRate: return "InvalidRate";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::InvalidLadder: return "InvalidLadder";
    case ErrorCode::SilentSource: return "SilentSource";
    case ErrorCode::RateMismatch: return "RateMismatch";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::AccumulatorOverflow: return "AccumulatorOverflow";
    case ErrorCode::SilentTarget: return "SilentTarget";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::ArchitectureMismatch: return "ArchitectureMismatch";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace edgespeech
