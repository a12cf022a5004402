#pragma once

#include <stdexcept>
#include <string>

namespace tsa {

// Base class for every error the toolkit raises on purpose. The CLI maps
// subclasses to stable exit codes; anything else escaping is a bug.
class TsaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad hyperparameter, malformed config file, unknown config key.
class ConfigError : public TsaError {
 public:
  using TsaError::TsaError;
};

// Dataset-level problems: unknown label, out-of-range class index, empty text.
class DataError : public TsaError {
 public:
  using TsaError::TsaError;
};

// Structural problems in a file being parsed (TSV, vectors, checkpoint).
class FormatError : public TsaError {
 public:
  using TsaError::TsaError;
};

// File could not be opened / read / written.
class IoError : public TsaError {
 public:
  using TsaError::TsaError;
};

// Tensor shape contract violated by an operation's inputs.
class DimensionError : public TsaError {
 public:
  using TsaError::TsaError;
};

// API misuse: non-scalar loss, missing gradient, and similar.
class UsageError : public TsaError {
 public:
  using TsaError::TsaError;
};

// A softmax/pooling row with no valid position left.
class InvalidMaskError : public TsaError {
 public:
  using TsaError::TsaError;
};

}  // namespace tsa
