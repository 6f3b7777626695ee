#pragma once

#include <stdexcept>
#include <string>

namespace chirpjoint {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Requested allocation exceeds the configured memory budget.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// Datacube file problems (bad magic, truncation, header/scenario mismatch, I/O).
class FormatError : public Error {
public:
    enum class Kind { BadMagic, Truncated, Mismatch, Io };

    FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Two manifold columns coincide (numerically rank-deficient steering matrix).
class DegeneracyError : public Error {
public:
    DegeneracyError(int mode_a, int mode_b, const std::string& what)
        : Error(what), mode_a_(mode_a), mode_b_(mode_b) {}
    int mode_a() const noexcept { return mode_a_; }
    int mode_b() const noexcept { return mode_b_; }

private:
    int mode_a_;
    int mode_b_;
};

/// No ambiguity hypothesis inside the search window was consistent.
class InitializationError : public Error {
public:
    using Error::Error;
};

/// Replica grouping could not form P groups of K_Tx replicas.
class GroupingError : public Error {
public:
    GroupingError(double residual_cost, const std::string& what) : Error(what), residual_cost_(residual_cost) {}
    double residual_cost() const noexcept { return residual_cost_; }

private:
    double residual_cost_;
};

/// FFT peak search failed (all-zero input or too few distinct peaks).
class DetectionError : public Error {
public:
    using Error::Error;
};

} // namespace chirpjoint
