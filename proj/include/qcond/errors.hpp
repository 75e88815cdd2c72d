#ifndef QCOND_ERRORS_HPP
#define QCOND_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace qcond {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad arguments or configuration values, detected before any solve.
class ValidationError : public Error {
public:
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// A configured hard limit was exceeded (e.g. refinement level cap).
class ResourceLimitError : public Error {
public:
  explicit ResourceLimitError(const std::string& msg) : Error(msg) {}
};

// A conductivity was evaluated outside its declared analyticity region.
class DomainEvalError : public Error {
public:
  explicit DomainEvalError(const std::string& msg) : Error(msg) {}
};

// Sampled complex ellipticity fell below the required floor.
class EllipticityError : public Error {
public:
  explicit EllipticityError(const std::string& msg) : Error(msg) {}
};

// Newton iteration failed to reach the residual tolerance.
class NonconvergenceError : public Error {
public:
  explicit NonconvergenceError(const std::string& msg) : Error(msg) {}
};

// Linear algebra failure (factorization or iteration).
class SolverError : public Error {
public:
  explicit SolverError(const std::string& msg) : Error(msg) {}
};

// A boundary-data provider could not answer a query.
class ProviderError : public Error {
public:
  explicit ProviderError(const std::string& msg) : Error(msg) {}
};

// Probe is not transversal enough at the anchor for reconstruction.
class TransversalityError : public Error {
public:
  explicit TransversalityError(const std::string& msg) : Error(msg) {}
};

// The model evaluator was called while disabled (data-only runs).
class IsolationError : public Error {
public:
  explicit IsolationError(const std::string& msg) : Error(msg) {}
};

} // namespace qcond

#endif
