#pragma once

#include <stdexcept>
#include <string>

namespace iamp {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File could not be read or violates the expected schema.
struct ParseError : Error {
    using Error::Error;
};

// An id refers to an entity that does not exist in the same container.
struct ReferenceError : Error {
    using Error::Error;
};

// Degenerate or out-of-gate geometry (short bounds, point too far from a centerline, off-map pose).
struct GeometryError : Error {
    using Error::Error;
};

// Mismatched vector/matrix dimensions or empty inputs where non-empty is required.
struct DimensionError : Error {
    using Error::Error;
};

// Numerical failure: weight underflow, normalization drift, training divergence.
struct NumericError : Error {
    using Error::Error;
};

// Input data problems: insufficient history, non-monotone frames, unknown scenario.
struct DataError : Error {
    using Error::Error;
};

}  // namespace iamp
