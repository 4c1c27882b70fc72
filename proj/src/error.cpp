#include "warpcore/error.hpp"

namespace warpcore {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDegeneratePoint: return "DegeneratePoint";
    case ErrorKind::kDegenerate: return "Degenerate";
    case ErrorKind::kInvalidScale: return "InvalidScale";
    case ErrorKind::kOutOfDomain: return "OutOfDomain";
    case ErrorKind::kSingularJacobian: return "SingularJacobian";
    case ErrorKind::kResampleRejected: return "ResampleRejected";
    case ErrorKind::kInvalidParams: return "InvalidParams";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kEmptyMask: return "EmptyMask";
    case ErrorKind::kNoValidSquare: return "NoValidSquare";
    case ErrorKind::kIoError: return "IoError";
    case ErrorKind::kUnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::kGraphCycle: return "GraphCycle";
  }
  return "Unknown";
}

}  // namespace warpcore
