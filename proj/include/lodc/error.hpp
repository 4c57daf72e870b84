#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace lodc {

// Every failure raised by the library derives from Error so callers (the CLI in
// particular) can map the kind to an exit status.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

// Malformed arguments: wrong lengths, unsupported orders, bad enum values.
class ArgumentError : public Error {
public:
    using Error::Error;
};

// The physical model has no unique answer (e.g. a rank-deficient Liouvillian).
class ModelError : public Error {
public:
    using Error::Error;
};

// A numerical routine failed to reach its tolerance.
class NumericalError : public Error {
public:
    using Error::Error;
};

// Truncated Taylor/Bussgang series did not settle. Carries the partial sums so
// the caller can report them.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::vector<double> partial_sums)
        : Error(what), partial_sums_(std::move(partial_sums)) {}

    const std::vector<double>& partial_sums() const noexcept { return partial_sums_; }

private:
    std::vector<double> partial_sums_;
};

// Series truncation produced a materially negative power.
class TruncationError : public Error {
public:
    using Error::Error;
};

} // namespace lodc
