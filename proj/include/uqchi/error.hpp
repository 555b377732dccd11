#pragma once

#include <stdexcept>
#include <string>

namespace uqchi {

/// Broad failure category. The CLI maps these onto process exit codes.
enum class ErrorKind {
    Validation,  // bad input data, bad configuration, schema violations
    Numerical,   // non-convergence, non-finite values, degenerate problems
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), kind_(kind), code_(std::move(code)) {}

    ErrorKind kind() const noexcept { return kind_; }

    /// Short machine-readable tag, e.g. "DuplicateTimeIndex".
    const std::string& code() const noexcept { return code_; }

private:
    ErrorKind kind_;
    std::string code_;
};

class ValidationError : public Error {
public:
    ValidationError(std::string code, const std::string& message)
        : Error(ErrorKind::Validation, std::move(code), message) {}
};

class NumericalError : public Error {
public:
    NumericalError(std::string code, const std::string& message)
        : Error(ErrorKind::Numerical, std::move(code), message) {}
};

}  // namespace uqchi
