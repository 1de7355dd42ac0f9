#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace shield {

enum class ErrorCode {
    InvalidArgument,
    NonConvergence,
    UncalibratedThreshold,
    SamplingExhausted,
    InsufficientData,
    DimensionMismatch,
    EmptyDataset,
    EmptySequence,
    NonPositiveVariance,
    TooFewMembers,
    GridMismatch,
    ConfigMismatch,
    Io,
    Format,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool ok, ErrorCode code, const std::string& what) {
    if (!ok) throw Error(code, what);
}

}  // namespace shield
