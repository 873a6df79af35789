#pragma once

#include <stdexcept>
#include <string>

namespace fredholm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The kernel does not define a contraction on the evaluation grid (rho >= 1).
class ContractionError : public Error {
public:
    using Error::Error;
};

/// A sample budget is too small for the requested depth or allocation rule.
class BudgetError : public Error {
public:
    using Error::Error;
};

/// Malformed problem description: bad grid, non-finite kernel, wrong table size.
class InvalidProblemError : public Error {
public:
    using Error::Error;
};

/// A grid function was used with a problem living on a different grid.
class DomainMismatchError : public Error {
public:
    using Error::Error;
};

/// Fixed-point iteration did not reach the requested tolerance within the depth cap.
class DepthLimitError : public Error {
public:
    using Error::Error;
};

/// Covariance matrix could not be factorized even after jitter escalation.
class FactorizationError : public Error {
public:
    using Error::Error;
};

/// Experiment configuration could not be parsed or is inconsistent.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace fredholm
