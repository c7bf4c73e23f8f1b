#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace scan {

// Base class for every error raised by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error {
    using Error::Error;
};

struct NotNormalized : Error {
    using Error::Error;
};

struct ZeroRow : Error {
    std::size_t row;
    explicit ZeroRow(std::size_t r)
        : Error("row " + std::to_string(r) + " has norm <= 1e-12"), row(r) {}
};

struct IndexOutOfRange : Error {
    using Error::Error;
};

struct LabelMismatch : Error {
    using Error::Error;
};

struct BadShape : Error {
    using Error::Error;
};

struct StaleCache : Error {
    using Error::Error;
};

struct ShapeMismatch : Error {
    using Error::Error;
};

struct EmptyBank : Error {
    using Error::Error;
};

struct BatchTooLarge : Error {
    using Error::Error;
};

struct BadTemperature : Error {
    using Error::Error;
};

struct EmptyNegativeSet : Error {
    using Error::Error;
};

struct TableMismatch : Error {
    using Error::Error;
};

struct EmptyTrainSet : Error {
    using Error::Error;
};

// File / serialization errors.
struct Io : Error {
    using Error::Error;
};

struct FormatVersion : Error {
    using Error::Error;
};

struct Corrupt : Error {
    using Error::Error;
};

}  // namespace scan
