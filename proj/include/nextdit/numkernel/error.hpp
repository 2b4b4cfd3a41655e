#pragma once

#include <stdexcept>
#include <string>

namespace nextdit {

// Shape or axis contract violated by the caller.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Invalid configuration (head counts, divisibility, tableau, ...).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation.
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

// Token count does not form the declared 2D grid.
struct GridError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace nextdit
