#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fedvec {

enum class ErrorCode {
    kInvalidArgument,
    kDimensionMismatch,
    kDuplicateId,
    kEmptyInput,
    kIo,
    kMalformed,
    kVersionMismatch,
    kChecksumMismatch,
    kShardUnavailable,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure surfaced by the library. `code()` lets callers branch
/// without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace fedvec
