// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace mvksr {

/// Failure categories. The CLI maps these onto process exit codes.
enum class ErrorCode {
  kInvalidArgument,  // bad shapes, ranges, flags
  kIo,               // unreadable/unwritable files
  kNumerical,        // NaN/Inf during training
  kBadMagic,
  kBadVersion,
  kBadCrc,
  kFormat,           // any other malformed file content
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorCode::kInvalidArgument, what);
}

}  // namespace mvksr
