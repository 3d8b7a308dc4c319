#include "fedvec/error.hpp"

namespace fedvec {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::kInvalidArgument: return "invalid argument";
        case ErrorCode::kDimensionMismatch: return "dimension mismatch";
        case ErrorCode::kDuplicateId: return "duplicate id";
        case ErrorCode::kEmptyInput: return "empty input";
        case ErrorCode::kIo: return "i/o error";
        case ErrorCode::kMalformed: return "malformed data";
        case ErrorCode::kVersionMismatch: return "version mismatch";
        case ErrorCode::kChecksumMismatch: return "checksum mismatch";
        case ErrorCode::kShardUnavailable: return "shard unavailable";
    }
    return "unknown";
}

}  // namespace fedvec
