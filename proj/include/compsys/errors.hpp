#pragma once

#include <stdexcept>
#include <string>

namespace compsys {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class DimensionMismatch : public Error {
public:
    explicit DimensionMismatch(const std::string& what) : Error(what) {}
};

class NotPositiveSemidefinite : public Error {
public:
    explicit NotPositiveSemidefinite(const std::string& what) : Error(what) {}
};

class SingularMatrix : public Error {
public:
    explicit SingularMatrix(const std::string& what) : Error(what) {}
};

class NotMetzler : public Error {
public:
    explicit NotMetzler(const std::string& what) : Error(what) {}
};

class NonConvergence : public Error {
public:
    explicit NonConvergence(const std::string& what) : Error(what) {}
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& what) : Error(what) {}
};

class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& what) : Error(what) {}
};

/// A loaded or constructed model violates a structural invariant.
/// `kind` is one of: FNotZeroAtOrigin, GNotZeroAtSourceZero, DimensionMismatch.
class InvariantViolation : public Error {
public:
    InvariantViolation(std::string kind, const std::string& what)
        : Error(kind + ": " + what), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

class NotAnEquilibrium : public Error {
public:
    explicit NotAnEquilibrium(const std::string& what) : Error(what) {}
};

class EquilibriumNotFound : public Error {
public:
    explicit EquilibriumNotFound(const std::string& what) : Error(what) {}
};

class LinearizationNotStable : public Error {
public:
    explicit LinearizationNotStable(const std::string& what) : Error(what) {}
};

class NoCertifiableLevel : public Error {
public:
    explicit NoCertifiableLevel(const std::string& what) : Error(what) {}
};

/// A sum-of-squares constraint system was proven infeasible.
class SosInfeasible : public Error {
public:
    explicit SosInfeasible(const std::string& what) : Error(what) {}
};

/// The solver hit its iteration cap without a verdict; callers treat this as
/// "not proven", never as "disproven".
class SosNotProven : public Error {
public:
    explicit SosNotProven(const std::string& what) : Error(what) {}
};

class Blowup : public Error {
public:
    explicit Blowup(const std::string& what) : Error(what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

}  // namespace compsys
