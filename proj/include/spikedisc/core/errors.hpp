#pragma once

#include <stdexcept>
#include <string>

namespace spikedisc {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or axis mismatch between operands.
struct DimensionError : Error {
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Precondition violated by the caller (T = 0, p >= 1, non-scalar loss, ...).
struct ContractError : Error {
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Bad or inconsistent configuration / file contents. CLI exit code 2.
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// NaN, divergence, or a numerically degenerate state. CLI exit code 3.
struct NumericFault : Error {
  explicit NumericFault(const std::string& msg) : Error(msg) {}
};

// Embedding with (near-)zero norm reached a normalization layer. Surfaced
// instead of epsilon-patched so training pathologies stay visible.
struct DegenerateEmbedding : NumericFault {
  explicit DegenerateEmbedding(const std::string& msg) : NumericFault(msg) {}
};

}  // namespace spikedisc
