#pragma once

#include <stdexcept>
#include <string>

namespace opg {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input: out-of-window wavelength, violated precondition, malformed file.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Numerical failure: no root, no convergence, inconsistent results.
class NumericalError : public Error {
public:
    using Error::Error;
};

class DomainError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class UnphasematchableError : public NumericalError {
public:
    UnphasematchableError(const std::string& what, double residual_lo, double residual_hi)
        : NumericalError(what), residual_lo_(residual_lo), residual_hi_(residual_hi) {}

    /// Δk_z (rad/µm) at the two ends of the search bracket.
    double residual_lo() const noexcept { return residual_lo_; }
    double residual_hi() const noexcept { return residual_hi_; }

private:
    double residual_lo_;
    double residual_hi_;
};

class CoverageError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class DegenerateInputError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError {
public:
    ConvergenceError(const std::string& what, double final_residual, std::size_t iterations)
        : NumericalError(what), final_residual_(final_residual), iterations_(iterations) {}

    double final_residual() const noexcept { return final_residual_; }
    std::size_t iterations() const noexcept { return iterations_; }

private:
    double final_residual_;
    std::size_t iterations_;
};

class FitQualityError : public NumericalError {
public:
    FitQualityError(const std::string& what, double r_squared)
        : NumericalError(what), r_squared_(r_squared) {}

    double r_squared() const noexcept { return r_squared_; }

private:
    double r_squared_;
};

class ConsistencyError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace opg
