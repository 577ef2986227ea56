#pragma once

#include <stdexcept>
#include <string>

namespace nfseg {

// Caller broke an operation precondition (shape mismatch, out-of-range input).
struct ContractViolation : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A configuration value is structurally invalid (indivisible sizes, bad enum).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerics left the finite domain (NaN/Inf in a loss or gradient).
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dataset or checkpoint could not be read.
struct LoadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace nfseg
