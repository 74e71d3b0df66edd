#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ncdl {

/// Bad argument or malformed input (CLI exit code 2).
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Shape mismatch between matrices that are supposed to chain.
struct ShapeError : ArgumentError {
    using ArgumentError::ArgumentError;
};

/// Operation called outside the regime it is defined for (exit code 3).
struct RegimeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Zero Gram or otherwise degenerate input to a normalized metric (exit code 3).
struct DegenerateInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A matrix decomposition failed to converge.
struct DecompositionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// An evaluation produced a non-finite value.
struct NumericOverflowError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Loss left the finite range during training (exit code 4).
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(std::size_t iteration)
        : std::runtime_error("loss diverged at iteration " + std::to_string(iteration)),
          iteration(iteration) {}
    std::size_t iteration;
};

}  // namespace ncdl
