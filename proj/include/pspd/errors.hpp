#pragma once

#include <stdexcept>
#include <string>

namespace pspd {

// Base for all toolkit errors. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid value or argument in a well-formed configuration (bad pixel index,
// non-positive width, overlapping pixel groups, ...).
class DomainError : public Error {
public:
  explicit DomainError(const std::string& msg) : Error(msg) {}
};

// Inconsistent configuration (table dimensions that do not match the sensor,
// invariant violations in config files, ...).
class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// Not enough data to run an estimator at the configured thresholds.
class InsufficientStatsError : public Error {
public:
  explicit InsufficientStatsError(const std::string& msg) : Error(msg) {}
};

// Nonlinear fit did not converge, or produced an unusable result.
class FitError : public Error {
public:
  explicit FitError(const std::string& msg) : Error(msg) {}
};

// Numerical oracle failed its internal grid-refinement stability check.
class ConvergenceError : public Error {
public:
  explicit ConvergenceError(const std::string& msg) : Error(msg) {}
};

} // namespace pspd
