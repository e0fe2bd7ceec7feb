#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace neurophys {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shape or dimension mismatch.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid parameter value (negative stride, dropout rate >= 1, ...).
struct ParamError : Error {
    using Error::Error;
};

// Inconsistent model or pipeline configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed file contents. Carries the byte offset of the first bad byte.
struct FormatError : Error {
    FormatError(const std::string& msg, std::size_t offset)
        : Error(msg + " (at byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
    std::size_t byte_offset;
};

// Invalid data value (label out of range, non-finite input, ...).
struct DataError : Error {
    using Error::Error;
};

// Filter design failure (unstable poles, band outside Nyquist, ...).
struct DesignError : Error {
    using Error::Error;
};

// Numerical blow-up during integration or training.
struct DivergenceError : Error {
    DivergenceError(const std::string& msg, std::size_t step)
        : Error(msg + " (step " + std::to_string(step) + ")"), step_index(step) {}
    std::size_t step_index;
};

// API misuse (backward on non-scalar, evaluate on empty data, ...).
struct UsageError : Error {
    using Error::Error;
};

}  // namespace neurophys
