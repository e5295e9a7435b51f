#pragma once

#include <stdexcept>
#include <string>

namespace mixtg {

/// Shape or axis disagreement between tensors.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid hyperparameter, toggle value, or parameter-set inconsistency.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed or truncated serialized container.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Non-finite values or other numerical breakdown at runtime.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Geometrically degenerate input (e.g. all points coincident).
struct DegeneracyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace mixtg
