#pragma once

#include <stdexcept>
#include <string>

namespace tedl {

// Operand shapes do not compose.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// NaN or Inf produced where a finite value is required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed dataset, model file or CSV input.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid run configuration or command-line usage.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

} // namespace tedl
