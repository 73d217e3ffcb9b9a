#include "emenv/errors.hpp"

namespace emenv {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NotPSD: return "NotPSD";
    case ErrorCode::NotPD: return "NotPD";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NotOrthonormal: return "NotOrthonormal";
    case ErrorCode::SingularObservedBlock: return "SingularObservedBlock";
    case ErrorCode::SingularA3: return "SingularA3";
    case ErrorCode::SingularMkPlusUk: return "SingularMkPlusUk";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonNumericCell: return "NonNumericCell";
    case ErrorCode::AllMissingColumn: return "AllMissingColumn";
    case ErrorCode::AllMissingRow: return "AllMissingRow";
    case ErrorCode::TooFewCompleteRows: return "TooFewCompleteRows";
    case ErrorCode::AllReplicatesFailed: return "AllReplicatesFailed";
    case ErrorCode::DimensionTooSmallForMechanism: return "DimensionTooSmallForMechanism";
    case ErrorCode::IoError: return "IoError";
  }
  return "UnknownError";
}

int error_exit_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::ShapeMismatch:
      return 2;
    case ErrorCode::MissingColumn:
    case ErrorCode::NonNumericCell:
    case ErrorCode::AllMissingColumn:
    case ErrorCode::AllMissingRow:
    case ErrorCode::TooFewCompleteRows:
    case ErrorCode::IoError:
      return 3;
    default:
      return 4;
  }
}

}  // namespace emenv
