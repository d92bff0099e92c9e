#pragma once

#include <stdexcept>
#include <string>

namespace vicomp {

// Exception hierarchy shared by all modules. The CLI maps these onto
// process exit codes (io -> 2, config/stability -> 3, anything else -> 4).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid parameter values (nonpositive sigma, empty search range, ...).
struct ParamError : Error {
    using Error::Error;
};

// Pixel data outside the domain an operation requires.
struct RangeError : Error {
    using Error::Error;
};

// TriImage color-encoding tag does not match what the operation expects.
struct EncodingError : Error {
    using Error::Error;
};

// Malformed or inconsistent configuration (unknown preset, bad screen, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Filter denominator too close to zero somewhere on the frequency grid.
struct StabilityError : Error {
    using Error::Error;
};

// File/stream failures, unsupported formats, malformed CSV.
struct IoError : Error {
    using Error::Error;
};

// Operation refused because the image is too large for the requested mode.
struct SizeError : Error {
    using Error::Error;
};

} // namespace vicomp
