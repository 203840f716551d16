#pragma once

#include <stdexcept>
#include <string>

namespace mals {

/// Invalid user-supplied configuration or input file (CLI exit code 2).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure during simulation or estimation (CLI exit code 3).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mals
