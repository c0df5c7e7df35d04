#pragma once

#include <stdexcept>
#include <string>

namespace neuronscope {

// Error taxonomy. DataError subclasses map to CLI exit code 2,
// UsageError to 1, NumericError to 3.

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// File does not carry the expected magic / layout.
struct FormatError : DataError {
  explicit FormatError(const std::string& msg) : DataError(msg) {}
};

// Header and payload disagree, truncated file, broken sidecar.
struct CorruptFile : DataError {
  explicit CorruptFile(const std::string& msg) : DataError(msg) {}
};

// NaN/Inf or other invariant-violating value in otherwise well-formed data.
struct InvalidValue : DataError {
  explicit InvalidValue(const std::string& msg) : DataError(msg) {}
};

struct IoError : DataError {
  explicit IoError(const std::string& msg) : DataError(msg) {}
};

struct ShapeError : DataError {
  explicit ShapeError(const std::string& msg) : DataError(msg) {}
};

struct IndexError : DataError {
  explicit IndexError(const std::string& msg) : DataError(msg) {}
};

struct InvalidArgument : DataError {
  explicit InvalidArgument(const std::string& msg) : DataError(msg) {}
};

// Rejection sampling or similar generation procedure gave up.
struct GenerationError : DataError {
  explicit GenerationError(const std::string& msg) : DataError(msg) {}
};

// Non-finite loss or similar numeric breakdown.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace neuronscope
