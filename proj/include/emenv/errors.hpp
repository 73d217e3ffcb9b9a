#pragma once

#include <stdexcept>
#include <string>

namespace emenv {

// Stable error codes; the CLI maps each to an exit class
// (2 usage/config, 3 data, 4 numerical).
enum class ErrorCode {
  InvalidArgument,
  ShapeMismatch,
  NotSymmetric,
  NotPSD,
  NotPD,
  RankDeficient,
  NotOrthonormal,
  SingularObservedBlock,
  SingularA3,
  SingularMkPlusUk,
  MissingColumn,
  NonNumericCell,
  AllMissingColumn,
  AllMissingRow,
  TooFewCompleteRows,
  AllReplicatesFailed,
  DimensionTooSmallForMechanism,
  IoError,
};

const char* error_code_name(ErrorCode code);

// Exit status class for the CLI: 2 usage, 3 data, 4 numerical.
int error_exit_status(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace emenv
