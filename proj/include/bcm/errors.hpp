#pragma once

#include <stdexcept>
#include <string>

namespace bcm {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument violated an operation's precondition (shape mismatch,
/// non-binary mask, non-finite input, out-of-range probability, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A trigger/target asset file is missing or unreadable.
class AssetError : public Error {
 public:
  AssetError(const std::string& file, const std::string& what)
      : Error("asset '" + file + "': " + what), file_(file) {}
  const std::string& file() const noexcept { return file_; }

 private:
  std::string file_;
};

/// Malformed on-disk data (dataset batches, checkpoints, images, configs).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A CSV or config is missing a required column/key.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// An operation received an empty collection where at least one item is required.
class EmptyInput : public Error {
 public:
  using Error::Error;
};

/// Numerical failure inside the training loop; the message carries the step context.
class TrainingAbort : public Error {
 public:
  using Error::Error;
};

}  // namespace bcm
