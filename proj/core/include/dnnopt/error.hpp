#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dnnopt {

enum class ErrorCode {
  kInvalidArgument,
  kInvalidDesign,
  kDimensionMismatch,
  kSpaceTooLarge,
  kInsufficientData,
  kUndefinedCorrelation,
  kUntrainedModel,
  kConfig,
  kIo,
};

std::string_view to_string(ErrorCode code);

// All library failures surface as this exception; `code()` tells callers
// which contract was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dnnopt
