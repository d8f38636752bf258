#pragma once

#include <stdexcept>
#include <string>

namespace robcv {

enum class ErrorCode {
  kInvalidArgument,
  kNonConvergence,
  kDegenerateResiduals,
  kZeroWeightSum,
  kAlphaZero,
  kKTooLarge,
  kEmptyErrors,
  kZeroVariance,
  kAllInfinite,
  kUnsupportedCalibration,
};

const char* to_string(ErrorCode code) noexcept;

/// Numerical or contract failure raised by the library.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// True for failures caused by bad inputs rather than numerics.
  bool is_input_error() const noexcept {
    return code_ == ErrorCode::kInvalidArgument || code_ == ErrorCode::kKTooLarge ||
           code_ == ErrorCode::kAlphaZero;
  }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool condition, const std::string& what) {
  if (!condition) {
    throw Error(ErrorCode::kInvalidArgument, what);
  }
}

}  // namespace robcv
