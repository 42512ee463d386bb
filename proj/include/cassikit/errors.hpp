#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cassikit {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dimension or layout mismatch between operands.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Argument outside its documented domain (bad mode, empty set, negative sigma, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
public:
    using Error::Error;
};

// Solver produced non-finite iterates; message names the stage.
class DivergenceError : public NumericError {
public:
    using NumericError::NumericError;
};

// Dense materialization would exceed the configured size guard.
class CapacityError : public Error {
public:
    using Error::Error;
};

// Sequence lacks the provenance needed for exact inversion.
class ProvenanceError : public Error {
public:
    using Error::Error;
};

// Malformed on-disk data; carries the byte offset of the first violation.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t byte_offset)
        : Error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
    explicit FormatError(const std::string& what) : Error(what), offset(0) {}

    std::size_t offset;
};

} // namespace cassikit
