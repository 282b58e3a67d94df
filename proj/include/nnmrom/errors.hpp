#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nnmrom {

// Base type for every error thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidParams : Error {
  using Error::Error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

struct IndexOutOfRange : Error {
  using Error::Error;
};

struct SeriesTooShort : Error {
  using Error::Error;
};

// Carries the offending channel index.
struct ZeroVariance : Error {
  explicit ZeroVariance(std::size_t ch)
      : Error("channel " + std::to_string(ch) + " has zero variance"), channel(ch) {}
  std::size_t channel;
};

struct SingularInputSpectrum : Error {
  using Error::Error;
};

// Integration produced a non-finite state; `step` is the step index at which
// the divergence was detected.
struct NonFiniteState : Error {
  NonFiniteState(std::size_t s, const std::string& msg) : Error(msg), step(s) {}
  std::size_t step;
};

struct NonFiniteLoss : Error {
  NonFiniteLoss(std::size_t s, const std::string& msg) : Error(msg), step(s) {}
  std::size_t step;
};

struct NonFinitePrediction : Error {
  NonFinitePrediction(std::size_t s, const std::string& msg) : Error(msg), step(s) {}
  std::size_t step;
};

// Backward called with a cache that does not match a forward pass.
struct StaleCache : Error {
  using Error::Error;
};

struct ConfigInconsistent : Error {
  using Error::Error;
};

struct VersionMismatch : Error {
  using Error::Error;
};

struct CorruptFile : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace nnmrom
