#pragma once

#include <stdexcept>
#include <string>

namespace vqaf {

// Error taxonomy shared by the whole library. The CLI maps these onto
// process exit codes (see tools/vqabench.cpp).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/rank mismatch between tensors.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameters or an illegal module/profile combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A backward call received a cache that does not belong to the module.
class StateError : public Error {
 public:
  using Error::Error;
};

// Malformed metric or fixture inputs.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// CSV/JSON parse failure; message carries the line number where known.
class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Toy training diverged; carries the step at which the loss became NaN.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& msg, std::size_t step)
      : Error(msg), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

}  // namespace vqaf
