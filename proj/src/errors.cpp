#include "lmminfer/errors.hpp"

namespace lmminfer {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ZeroColumn: return "ZeroColumn";
    case ErrorCode::SingularBlock: return "SingularBlock";
    case ErrorCode::NonPD: return "NonPD";
    case ErrorCode::LayoutMismatch: return "LayoutMismatch";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::IterationLimit: return "IterationLimit";
    case ErrorCode::Unbounded: return "Unbounded";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::DegenerateScale: return "DegenerateScale";
    case ErrorCode::CollinearZ: return "CollinearZ";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::NoSignChange: return "NoSignChange";
    case ErrorCode::SparsityOverflow: return "SparsityOverflow";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::SingularSubmatrix: return "SingularSubmatrix";
    case ErrorCode::ProxyNotInvertible: return "ProxyNotInvertible";
    case ErrorCode::Schema: return "SchemaError";
    case ErrorCode::Io: return "IoError";
  }
  return "Unknown";
}

}  // namespace lmminfer
