#include "plrl/error.h"

namespace plrl {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
    case ErrorCode::kOutOfRange: return "out-of-range";
    case ErrorCode::kNumeric: return "numeric-abort";
    case ErrorCode::kSchema: return "schema";
    case ErrorCode::kNotFound: return "not-found";
    case ErrorCode::kVersion: return "version";
    case ErrorCode::kCorrupt: return "corrupt";
    case ErrorCode::kUnsupported: return "unsupported";
    case ErrorCode::kDependency: return "dependency";
    case ErrorCode::kUsage: return "usage";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

}  // namespace plrl
