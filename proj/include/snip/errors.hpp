#pragma once

#include <stdexcept>
#include <string>

namespace snip {

// Shape/contract violations in tensor ops (reported with both shapes).
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration: unknown key, type mismatch, out-of-range value.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad input data: CSV ingestion, token ids out of range, empty stats.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / serialization failures (checkpoints, reports, locks).
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace snip
