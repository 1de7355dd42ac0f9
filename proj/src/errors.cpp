#include "shield/errors.hpp"

namespace shield {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::NonConvergence: return "NonConvergence";
        case ErrorCode::UncalibratedThreshold: return "UncalibratedThreshold";
        case ErrorCode::SamplingExhausted: return "SamplingExhausted";
        case ErrorCode::InsufficientData: return "InsufficientData";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::EmptySequence: return "EmptySequence";
        case ErrorCode::NonPositiveVariance: return "NonPositiveVariance";
        case ErrorCode::TooFewMembers: return "TooFewMembers";
        case ErrorCode::GridMismatch: return "GridMismatch";
        case ErrorCode::ConfigMismatch: return "ConfigMismatch";
        case ErrorCode::Io: return "Io";
        case ErrorCode::Format: return "Format";
    }
    return "Unknown";
}

}  // namespace shield
