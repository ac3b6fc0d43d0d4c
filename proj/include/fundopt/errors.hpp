#pragma once

#include <stdexcept>
#include <string>

namespace fundopt {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Input lies outside the mathematical domain of an operation.
struct DomainError : Error {
    using Error::Error;
};

/// An iterative routine (bisection, golden section) failed to converge.
struct ConvergenceError : Error {
    using Error::Error;
};

/// Market price of risk is zero; closed-form solver does not apply.
struct DegenerateMarket : Error {
    using Error::Error;
};

struct TimeOutOfRange : Error {
    using Error::Error;
};

/// Incentive slope exceeds the normalized maximum of one.
struct SlopeViolation : Error {
    using Error::Error;
};

struct InvalidRange : Error {
    using Error::Error;
};

/// Gramian of the mixture market prices of risk is numerically singular.
struct GramianSingular : Error {
    using Error::Error;
};

struct EmptySample : Error {
    using Error::Error;
};

/// Malformed or inconsistent run configuration.
struct ConfigError : Error {
    using Error::Error;
};

/// Model guard violated (e.g. Feller condition for the Heston variance).
struct ModelGuardError : Error {
    using Error::Error;
};

}  // namespace fundopt
