#pragma once

#include <stdexcept>
#include <string>

namespace sdde {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    /// Process exit status reported by the command-line front end.
    [[nodiscard]] virtual int exit_code() const noexcept { return 4; }
};

/// Bad arguments or configuration: wrong dimensions, out-of-range times, malformed input.
class InvalidInput : public Error {
public:
    using Error::Error;
    [[nodiscard]] int exit_code() const noexcept override { return 2; }
};

/// The model violates a density-existence assumption (ellipticity, strictly positive kernel).
class AssumptionViolation : public Error {
public:
    using Error::Error;
    [[nodiscard]] int exit_code() const noexcept override { return 3; }
};

/// A numerical method failed: CFL violation, non-finite values, singular covariance.
class NumericFailure : public Error {
public:
    using Error::Error;
    [[nodiscard]] int exit_code() const noexcept override { return 4; }
};

}  // namespace sdde
