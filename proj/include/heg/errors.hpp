#pragma once

#include <stdexcept>
#include <string>

namespace heg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed arguments: non-finite coordinates, shape or spin mismatches.
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Inconsistent or unsatisfiable configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Operation called on an object that is not ready for it (e.g. empty accumulator).
class InvalidState : public Error {
public:
    using Error::Error;
};

/// Coulomb energy diverges (coincident particles).
class Divergence : public Error {
public:
    using Error::Error;
};

/// Orbital matrix numerically singular; the sample must be rejected.
class SingularWavefunction : public Error {
public:
    using Error::Error;
};

/// Optimization or propagation produced non-finite numbers.
class NumericalAbort : public Error {
public:
    using Error::Error;
};

}  // namespace heg
