#pragma once

#include <stdexcept>
#include <string>

namespace contourcnn {

/// Caller violated a precondition (shape mismatch, bad argument, bad config).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A forward or backward pass produced a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raster input could not be turned into a usable contour.
class ExtractionError : public std::runtime_error {
 public:
  ExtractionError(std::string reason, const std::string& what)
      : std::runtime_error(what), reason_(std::move(reason)) {}

  /// Short machine-readable reason ("empty", "degenerate").
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string reason_;
};

/// Malformed IDX input.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or corrupted sample cache.
class CacheError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed, corrupted or incompatible checkpoint.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace contourcnn
