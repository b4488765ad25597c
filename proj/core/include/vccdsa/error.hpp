#pragma once

#include <stdexcept>
#include <string>

namespace vccdsa {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values (zero image size, channel count < 1, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Invalid call arguments (shape mismatch, level out of range, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Input data that cannot support the requested operation.
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Raised by the training loop when the loss turns non-finite or explodes.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

}  // namespace vccdsa
