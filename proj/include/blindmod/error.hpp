#pragma once

#include <stdexcept>
#include <string>

namespace blindmod {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An argument violates a documented precondition.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// The computation ran but its result is not meaningful (e.g. the detected
/// band covers the whole spectrum).
class DegenerateResultError : public Error {
public:
    using Error::Error;
};

/// Malformed or unreadable file content.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace blindmod
