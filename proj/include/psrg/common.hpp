#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace psrg {

// Error taxonomy. Exit-code mapping for the CLI lives in tools/.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/layer dimension problems.
struct ShapeError : Error {
    using Error::Error;
};

// NaN/Inf encountered, or a value outside its mathematical domain.
struct NumericError : Error {
    using Error::Error;
};

// Invalid or inconsistent configuration (bad ladder, unknown key, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Unreadable/corrupt files, empty directories, checkpoint mismatches.
struct DataError : Error {
    using Error::Error;
};

// API misuse: missing gradient, non-scalar loss, frozen-stage update.
struct ContractError : Error {
    using Error::Error;
};

}  // namespace psrg
