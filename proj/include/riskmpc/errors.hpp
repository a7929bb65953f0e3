#pragma once

#include <stdexcept>
#include <string>

namespace riskmpc {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Numerical / synthesis failures.
class NotStable : public Error {
public:
    explicit NotStable(const std::string& what) : Error(what) {}
};

class NonConvergence : public Error {
public:
    explicit NonConvergence(const std::string& what) : Error(what) {}
};

class NotStabilizable : public Error {
public:
    explicit NotStabilizable(const std::string& what) : Error(what) {}
};

class NotPSD : public Error {
public:
    explicit NotPSD(const std::string& what) : Error(what) {}
};

class DimensionMismatch : public Error {
public:
    explicit DimensionMismatch(const std::string& what) : Error(what) {}
};

// Risk-estimator failures.
class EmptySamples : public Error {
public:
    explicit EmptySamples(const std::string& what) : Error(what) {}
};

class EVaRSearchFailure : public Error {
public:
    explicit EVaRSearchFailure(const std::string& what) : Error(what) {}
};

// Controller initialization / runtime failures.
class InitCovTooLarge : public Error {
public:
    explicit InitCovTooLarge(const std::string& what) : Error(what) {}
};

class InitInfeasible : public Error {
public:
    explicit InitInfeasible(const std::string& what) : Error(what) {}
};

class QpInfeasible : public Error {
public:
    explicit QpInfeasible(const std::string& what) : Error(what) {}
};

// Configuration / input errors (CLI exit code 2).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

}  // namespace riskmpc
