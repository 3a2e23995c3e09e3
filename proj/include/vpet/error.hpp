#pragma once

#include <stdexcept>
#include <string>

namespace vpet {

enum class ErrorKind {
  EmptyDataset,
  InsufficientShots,
  BadMagic,
  UnsupportedVersion,
  Truncated,
  NonFinite,
  LabelOutOfRange,
  Shape,
  Divergence,
  TooFewPoints,
  LengthMismatch,
  NonStochastic,
  MisalignedSources,
  InsufficientSources,
  Config,
  Io,
  LeakedLabels,
};

const char* to_string(ErrorKind kind);

/// Data-level failure. The CLI maps these to exit code 2.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace vpet
