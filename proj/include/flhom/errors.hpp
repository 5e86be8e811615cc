#pragma once

#include <stdexcept>
#include <string>

namespace flhom {

// Invalid argument to a mathematical operation (non-positive lifetime, NaN, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Inconsistent or malformed experiment / run configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Optimizer / sampler failures.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace flhom
