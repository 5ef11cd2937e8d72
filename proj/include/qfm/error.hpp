#pragma once

#include <stdexcept>
#include <string>

namespace qfm {

enum class ErrorCode {
  // data errors
  MissingColumn,
  NonNumericCell,
  DuplicateObservation,
  EmptyPeriod,
  UnknownPeriod,
  NonFiniteInput,
  InsufficientObservations,
  DimensionMismatch,
  InsufficientHistory,
  InvalidArgument,
  IoError,
  // numerical errors
  RankDeficient,
  DegenerateProblem,
  SingularGram,
  NonFinite,
  GuardExceeded,
  NoNonsingularSubset,
  KOutOfRange,
  TooFewEigenvalues,
  TooFewDraws,
};

enum class ErrorClass { Usage = 1, Data = 2, Numerical = 3 };

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonNumericCell: return "NonNumericCell";
    case ErrorCode::DuplicateObservation: return "DuplicateObservation";
    case ErrorCode::EmptyPeriod: return "EmptyPeriod";
    case ErrorCode::UnknownPeriod: return "UnknownPeriod";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::InsufficientObservations: return "InsufficientObservations";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InsufficientHistory: return "InsufficientHistory";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::DegenerateProblem: return "DegenerateProblem";
    case ErrorCode::SingularGram: return "SingularGram";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::GuardExceeded: return "GuardExceeded";
    case ErrorCode::NoNonsingularSubset: return "NoNonsingularSubset";
    case ErrorCode::KOutOfRange: return "KOutOfRange";
    case ErrorCode::TooFewEigenvalues: return "TooFewEigenvalues";
    case ErrorCode::TooFewDraws: return "TooFewDraws";
  }
  return "Unknown";
}

/// Which CLI exit status an error maps to.
inline ErrorClass error_class(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn:
    case ErrorCode::NonNumericCell:
    case ErrorCode::DuplicateObservation:
    case ErrorCode::EmptyPeriod:
    case ErrorCode::UnknownPeriod:
    case ErrorCode::NonFiniteInput:
    case ErrorCode::InsufficientObservations:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::InsufficientHistory:
    case ErrorCode::IoError:
      return ErrorClass::Data;
    case ErrorCode::InvalidArgument:
    case ErrorCode::KOutOfRange:
    case ErrorCode::TooFewDraws:
      return ErrorClass::Usage;
    default:
      return ErrorClass::Numerical;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace qfm
