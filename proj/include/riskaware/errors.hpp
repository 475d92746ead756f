#pragma once

#include <stdexcept>
#include <string>

namespace riskaware {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a documented invariant or precondition.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Iterative numerics failed (value iteration did not converge, MCMC chain
/// rejected every proposal, ...).
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what, double last_residual = 0.0)
        : Error(what), residual_(last_residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// Reading or writing an artifact failed.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace riskaware
