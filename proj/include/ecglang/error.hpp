#pragma once

#include <stdexcept>
#include <string>

namespace ecglang {

// Base for everything thrown by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad user input: malformed config, invalid arguments. CLI exit code 1.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed or inconsistent data files. CLI exit code 2.
struct DataError : Error {
    using Error::Error;
};

// Non-finite values or diverging computations. CLI exit code 3.
struct NumericalFault : Error {
    using Error::Error;
};

struct UnknownLabel : DataError {
    using DataError::DataError;
};

// Requested notch frequency at or above Nyquist; the biquad is undefined there.
struct NyquistNotch : ConfigError {
    using ConfigError::ConfigError;
};

struct EmptyRecord : DataError {
    using DataError::DataError;
};

struct UndefinedSimilarity : NumericalFault {
    using NumericalFault::NumericalFault;
};

} // namespace ecglang
