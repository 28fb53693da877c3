#ifndef PLRL_ERROR_H_
#define PLRL_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace plrl {

enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kOutOfRange,
  kNumeric,      // NaN/Inf encountered, training aborted
  kSchema,       // input file does not match the expected columns
  kNotFound,     // missing file or unknown identifier
  kVersion,      // checkpoint format version mismatch
  kCorrupt,      // checkpoint or manifest is truncated or fails its checksum
  kUnsupported,
  kDependency,   // a prerequisite artifact is missing
  kUsage,
  kIo,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace plrl

#endif  // PLRL_ERROR_H_
