#include "coprou/error.hpp"

namespace coprou {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kNonPositiveDepth: return "NonPositiveDepth";
    case ErrorKind::kNonPositiveInput: return "NonPositiveInput";
    case ErrorKind::kNonPositiveSigma: return "NonPositiveSigma";
    case ErrorKind::kNonPositiveDenominator: return "NonPositiveDenominator";
    case ErrorKind::kEmptyValidSet: return "EmptyValidSet";
    case ErrorKind::kDegenerateSpec: return "DegenerateSpec";
    case ErrorKind::kOutOfBounds: return "OutOfBounds";
    case ErrorKind::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::kDegenerateGeometry: return "DegenerateGeometry";
    case ErrorKind::kTrajectoryTooShort: return "TrajectoryTooShort";
    case ErrorKind::kIo: return "Io";
  }
  return "Unknown";
}

}  // namespace coprou
