#pragma once

#include <stdexcept>
#include <string>

namespace tinyguard {

/// Invalid configuration value or unsatisfiable request (bad parameter,
/// empty input where content is required, infeasible aggregator setup).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed external data (IDX headers, truncated payloads).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched vector lengths or layouts.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values where finite numerics are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tinyguard
