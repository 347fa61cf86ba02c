#pragma once

#include <stdexcept>
#include <string>

namespace sf {

// Shape/axis violations: mismatched dimensions, bad broadcasts, bad axes.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Value-domain violations: division by zero, log of a non-positive, etc.
struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Broken API contracts: non-scalar backward root, missing pixel records,
// non-rigid transforms where a rigid one is required.
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// File parsing / serialization failures.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Synthetic-world generation failures (degenerate configurations).
struct GenerationError : std::runtime_error {
  explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sf
