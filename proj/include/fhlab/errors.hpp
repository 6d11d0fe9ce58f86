#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fhlab {

// Bad or inconsistent input: unknown keys, CFL violations, mismatched grids.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Requested spectral resolution exceeds what the grid can represent.
class ResolutionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Too few points for a fit.
class ArityError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// NaN/overflow during time stepping. Carries the offending step index and,
// when available, the last finite state.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, std::size_t step, std::vector<double> last_stable = {})
        : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step), last_stable_(std::move(last_stable)) {}

    std::size_t step() const noexcept { return step_; }
    const std::vector<double>& last_stable() const noexcept { return last_stable_; }

private:
    std::size_t step_;
    std::vector<double> last_stable_;
};

}  // namespace fhlab
