#pragma once

#include <stdexcept>
#include <string>

namespace localegn {

/// Tensor/operand dimension mismatch. The message names both shapes.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or inconsistent input data (CSV ingestion, series too short, ...).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid configuration: bad parameter values, variant/checkpoint mismatch.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Numeric failure during optimization (non-finite loss).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace localegn
