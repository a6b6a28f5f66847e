#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lmminfer {

enum class ErrorCode {
  InvalidArgument,
  ZeroColumn,
  SingularBlock,
  NonPD,
  LayoutMismatch,
  Infeasible,
  IterationLimit,
  Unbounded,
  NotConverged,
  DegenerateScale,
  CollinearZ,
  DegenerateVariance,
  NoSignChange,
  SparsityOverflow,
  NotPositiveDefinite,
  SingularSubmatrix,
  ProxyNotInvertible,
  Schema,
  Io,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported through this type; `code()` is stable and
// is what the CLI prints as the machine-readable error tag.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace lmminfer
