#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mfdgm {

/// Caller violated a precondition (empty batch, bad step size, bad config value).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Parameter vector or input dimension does not match the network/problem.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input outside the domain of a function (non-finite coordinates, ln of rho <= 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A non-finite value appeared during evaluation.  `sample()` is the batch
/// index of the offending sample, or -1 when not tied to a sample.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::ptrdiff_t sample = -1)
      : std::runtime_error(what), sample_(sample) {}
  std::ptrdiff_t sample() const noexcept { return sample_; }

 private:
  std::ptrdiff_t sample_;
};

/// Configuration file could not be parsed or failed validation.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint file is corrupt or has an unsupported version.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mfdgm
