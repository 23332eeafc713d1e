#pragma once

#include <stdexcept>
#include <string>

namespace feberi {

// Invalid user input or inconsistent parameters; the CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of a formula.
struct DomainError : ConfigError {
    using ConfigError::ConfigError;
};

// Numerical failures; the CLI maps these to exit code 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Grid too coarse or too narrow for the requested state.
struct ResolutionError : NumericError {
    using NumericError::NumericError;
};

// Closed-form approximation used outside its validity window.
struct ValidityError : NumericError {
    using NumericError::NumericError;
};

}  // namespace feberi
