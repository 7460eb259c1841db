#pragma once

#include <stdexcept>
#include <string>

namespace ldl {

// Process exit codes used by the CLI.
enum class ExitCode : int {
    ok = 0,
    usage = 1,
    config_invalid = 2,
    non_convergence = 3,
    oracle_disagreement = 4,
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Singular pivots, non-finite values and similar failures inside a solve.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An iterative method hit its iteration cap. Carries the last residual.
class ConvergenceError : public NumericalError {
public:
    ConvergenceError(const std::string& what, double residual, int iterations)
        : NumericalError(what + " (residual " + std::to_string(residual) + " after " +
                         std::to_string(iterations) + " iterations)"),
          residual_(residual),
          iterations_(iterations) {}

    double residual() const noexcept { return residual_; }
    int iterations() const noexcept { return iterations_; }

private:
    double residual_;
    int iterations_;
};

}  // namespace ldl
