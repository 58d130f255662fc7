#pragma once

#include <stdexcept>
#include <string>

namespace gce {

// Invalid runtime argument (bad dimensions, out-of-range values, degenerate input).
struct argument_error : std::runtime_error {
  explicit argument_error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration (network spec, trainer/estimator/experiment settings).
struct config_error : std::runtime_error {
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or truncated file content.
struct format_error : std::runtime_error {
  explicit format_error(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure: divergence, non-convergence, non-finite values.
struct numerical_error : std::runtime_error {
  explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

// Requested a mode or feature that is intentionally not provided.
struct unsupported_error : std::runtime_error {
  explicit unsupported_error(const std::string& what) : std::runtime_error(what) {}
};

// API misuse detected at runtime (e.g. consuming a backprop tape twice).
struct contract_error : std::logic_error {
  explicit contract_error(const std::string& what) : std::logic_error(what) {}
};

}  // namespace gce
