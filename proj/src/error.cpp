#include "rbsde/error.hpp"

namespace rbsde {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::NonIncreasingGrid: return "NonIncreasingGrid";
        case ErrorCode::KernelNotProbability: return "KernelNotProbability";
        case ErrorCode::CompensatorOutOfRange: return "CompensatorOutOfRange";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::TreeTooLarge: return "TreeTooLarge";
        case ErrorCode::FieldDomainMismatch: return "FieldDomainMismatch";
        case ErrorCode::NotConvex: return "NotConvex";
        case ErrorCode::MinimizerDiverged: return "MinimizerDiverged";
        case ErrorCode::FixedPointDiverged: return "FixedPointDiverged";
        case ErrorCode::ObstacleAboveTerminal: return "ObstacleAboveTerminal";
        case ErrorCode::RuleNotAdapted: return "RuleNotAdapted";
        case ErrorCode::EnumerationTooLarge: return "EnumerationTooLarge";
        case ErrorCode::PricePositivityViolated: return "PricePositivityViolated";
        case ErrorCode::EmptyConstraintSet: return "EmptyConstraintSet";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::MissingResults: return "MissingResults";
    }
    return "UnknownError";
}

}  // namespace rbsde
