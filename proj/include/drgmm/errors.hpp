#pragma once

#include <stdexcept>
#include <string>

namespace drgmm {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input, dimension mismatch, invalid parameters.
class InputError : public Error {
public:
    using Error::Error;
};

// Singular covariance, degenerate weight matrix, overflow.
class NumericalError : public Error {
public:
    using Error::Error;
};

class SingularCovarianceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

class UnsupportedError : public Error {
public:
    using Error::Error;
};

}  // namespace drgmm
