#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace coprou {

enum class ErrorKind {
  kInvalidArgument,
  kDimensionMismatch,
  kNonPositiveDepth,
  kNonPositiveInput,
  kNonPositiveSigma,
  kNonPositiveDenominator,
  kEmptyValidSet,
  kDegenerateSpec,
  kOutOfBounds,
  kNonFiniteLoss,
  kDegenerateGeometry,
  kTrajectoryTooShort,
  kIo,
};

std::string_view error_kind_name(ErrorKind kind);

/// Domain error raised by every module. The kind is stable and machine
/// readable; the message carries the human-oriented detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace coprou
