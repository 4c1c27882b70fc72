#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace warpcore {

enum class ErrorKind {
  kDegeneratePoint,
  kDegenerate,
  kInvalidScale,
  kOutOfDomain,
  kSingularJacobian,
  kResampleRejected,
  kInvalidParams,
  kShapeMismatch,
  kEmptyMask,
  kNoValidSquare,
  kIoError,
  kUnsupportedFormat,
  kGraphCycle,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries one of the kinds above so
/// callers (notably the CLI) can map it to a stable exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace warpcore
