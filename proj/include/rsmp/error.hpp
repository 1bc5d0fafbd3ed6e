#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rsmp {

enum class ErrorKind {
    NonSquare,
    NegativeOffDiagonal,
    RowSumViolation,
    NonFinite,
    NegativeTime,
    InvalidInitialState,
    StateOutOfRange,
    TimeOutOfRange,
    MissingField,
    DimensionMismatch,
    ZeroVolatility,
    NonFiniteSolution,
    BadInterval,
    DegenerateDual,
    ConfigParse,
    InvalidArgument,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NonSquare: return "NonSquare";
        case ErrorKind::NegativeOffDiagonal: return "NegativeOffDiagonal";
        case ErrorKind::RowSumViolation: return "RowSumViolation";
        case ErrorKind::NonFinite: return "NonFinite";
        case ErrorKind::NegativeTime: return "NegativeTime";
        case ErrorKind::InvalidInitialState: return "InvalidInitialState";
        case ErrorKind::StateOutOfRange: return "StateOutOfRange";
        case ErrorKind::TimeOutOfRange: return "TimeOutOfRange";
        case ErrorKind::MissingField: return "MissingField";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::ZeroVolatility: return "ZeroVolatility";
        case ErrorKind::NonFiniteSolution: return "NonFiniteSolution";
        case ErrorKind::BadInterval: return "BadInterval";
        case ErrorKind::DegenerateDual: return "DegenerateDual";
        case ErrorKind::ConfigParse: return "ConfigParse";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace rsmp
