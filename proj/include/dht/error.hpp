#pragma once

#include <stdexcept>
#include <string>

namespace dht {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A distribution or channel failed validation (normalization, sign, support).
class InvalidDistribution : public Error {
public:
    using Error::Error;
};

/// Two distributions that must share an alphabet do not.
class AlphabetMismatch : public Error {
public:
    using Error::Error;
};

/// An argument lies outside the domain where a formula is defined.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A calibration target cannot be reached on the given grid.
class UnreachableTarget : public Error {
public:
    using Error::Error;
};

}  // namespace dht
