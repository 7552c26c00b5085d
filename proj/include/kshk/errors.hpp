// SPDX-License-Identifier: MIT
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace kshk {

// Root of the library's exception hierarchy. Every error thrown by kshk
// derives from this, so callers can catch kshk::Error at API boundaries.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// --- state / algebra ---

class NonPhysicalState : public Error {
public:
    using Error::Error;
};

class NewtonDivergence : public Error {
public:
    NewtonDivergence(const std::string& msg, std::vector<double> history)
        : Error(msg), residual_history(std::move(history)) {}
    std::vector<double> residual_history;
};

class LaxViolation : public Error {
public:
    using Error::Error;
};

// --- spectral basis ---

class IncompatibleSets : public Error {
public:
    using Error::Error;
};

class DegreeTooSmall : public Error {
public:
    using Error::Error;
};

class QuadratureConfigInvalid : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

// --- collision / transport ---

class SingularMicroBlock : public Error {
public:
    using Error::Error;
};

class NonPositiveCoefficient : public Error {
public:
    using Error::Error;
};

class JacobianUnavailable : public Error {
public:
    using Error::Error;
};

class EigSolverFailure : public Error {
public:
    using Error::Error;
};

// --- profile ODE ---

class DegenerateMassFlux : public Error {
public:
    using Error::Error;
};

class OrbitEscape : public Error {
public:
    using Error::Error;
};

class GridTooShort : public Error {
public:
    using Error::Error;
};

class SonicDegeneracy : public Error {
public:
    using Error::Error;
};

// --- linear BVP ---

class NonMicroscopicSource : public Error {
public:
    using Error::Error;
};

class ImaginaryAxisEigenvalue : public Error {
public:
    using Error::Error;
};

class ContractionFailure : public Error {
public:
    using Error::Error;
};

class SingularBVP : public Error {
public:
    using Error::Error;
};

class GridMismatch : public Error {
public:
    using Error::Error;
};

// --- fixed point ---

class NonMicroscopicError : public Error {
public:
    using Error::Error;
};

class ContractionStall : public Error {
public:
    ContractionStall(const std::string& msg, std::vector<double> ratios)
        : Error(msg), contraction_ratios(std::move(ratios)) {}
    std::vector<double> contraction_ratios;
};

// --- CLI / IO ---

class ValidationError : public Error {
public:
    using Error::Error;
};

class IOError : public Error {
public:
    using Error::Error;
};

} // namespace kshk
