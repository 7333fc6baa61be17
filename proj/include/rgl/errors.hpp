#pragma once

#include <stdexcept>
#include <string>

namespace rgl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BadPartition : public Error {
public:
    using Error::Error;
};

class BadConfig : public Error {
public:
    using Error::Error;
};

class ZeroSignEntry : public Error {
public:
    using Error::Error;
};

class InvalidTransition : public Error {
public:
    using Error::Error;
};

class SingularUpdate : public Error {
public:
    using Error::Error;
};

class SingularSystem : public Error {
public:
    using Error::Error;
};

class OutOfRange : public Error {
public:
    using Error::Error;
};

/// Raised when a homotopy run exceeds its event budget (usually float cycling
/// between two critical points).
class PathStall : public Error {
public:
    using Error::Error;
};

class NoConvergence : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace rgl
