#pragma once

#include <stdexcept>
#include <string>

namespace tripnet {

/// Tensor shape disagreement (dimensions named in the message).
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// API contract violation (e.g. backward on a non-scalar loss).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Invalid configuration (variant/params mismatch, empty grid, bad spec).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Bad input data (malformed CSV rows, invariant violations, leakage).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numeric failure (NaN gradients, loss-domain violations, singular solves).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace tripnet
