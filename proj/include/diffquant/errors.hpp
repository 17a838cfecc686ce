#pragma once

#include <stdexcept>
#include <string>

namespace diffquant {

// Exception hierarchy; the CLI maps each type to a fixed exit code
// (config 2, missing input 3, incompatible artifact 4, runtime/numeric 5).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad configuration value or unknown key.
struct ConfigError : Error {
    using Error::Error;
};

// Required input file does not exist or cannot be opened.
struct MissingInputError : Error {
    using Error::Error;
};

// Artifacts that do not fit together (architecture, dimension, format).
struct IncompatibleError : Error {
    using Error::Error;
};

// Invalid data fed to an operation (non-finite elements, empty tensors,
// out-of-range timesteps).
struct InputError : Error {
    using Error::Error;
};

// Numeric failure at runtime (divergence, corrupt stream).
struct NumericError : Error {
    using Error::Error;
};

}  // namespace diffquant
