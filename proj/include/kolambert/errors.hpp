#pragma once

#include <stdexcept>
#include <string>

namespace kolambert {

// Error hierarchy used across the library. Every category maps onto a CLI
// exit code in tools/: usage -> 2, non-convergence -> 3, resource cap -> 4.

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A point fell outside the basis domain box, or an argument violated a
// documented precondition.
struct DomainError : Error {
    using Error::Error;
};

struct ArgumentError : Error {
    using Error::Error;
};

// Coordinate transformation hit one of its singular configurations
// (polar axis, p_theta^2 == p_lambda^2 off the equator, ...).
struct SingularGeometryError : Error {
    using Error::Error;
};

// Element state could not be inverted back to spherical coordinates.
struct InversionError : Error {
    using Error::Error;
};

// Transfer geometry leaves the orbit plane (or the transfer angle) undefined.
struct DegenerateGeometryError : Error {
    using Error::Error;
};

// Koopman matrix assembly failed (non-finite dynamics at a node, ...).
struct AssemblyError : Error {
    using Error::Error;
};

struct DecompositionError : Error {
    using Error::Error;
};

// Spectral propagation produced an imaginary residue above tolerance.
struct SpectralConsistencyError : Error {
    using Error::Error;
};

struct PropagationError : Error {
    using Error::Error;
};

struct IntegrationError : Error {
    using Error::Error;
};

// A configured size cap (basis count, quadrature grid, ...) was exceeded.
struct ResourceCapError : Error {
    using Error::Error;
};

struct NoSolutionError : Error {
    using Error::Error;
};

struct SolverError : Error {
    using Error::Error;
};

struct CacheError : Error {
    using Error::Error;
};

struct UsageError : Error {
    using Error::Error;
};

}  // namespace kolambert
