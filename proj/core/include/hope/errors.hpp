#pragma once

#include <stdexcept>
#include <string>

namespace hope {

// Shape disagreement between operands (matmul, add, adam_step, ...).
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

// A caller broke a documented precondition (non-scalar loss, empty token
// sequence, label outside the seen set, ...).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration values (seen fraction out of range, tau <= 0, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed on-disk artifacts: manifests, embedding files, checkpoints.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Runtime failure inside the training loop (NaN loss component, ...).
struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hope
