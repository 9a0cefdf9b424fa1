#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vperturb {

// Base of every error raised by the library. The CLI maps subclasses to exit
// codes (config 2, data 3, verification 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument: dimension mismatch, empty batch, out-of-range step.
class InputError : public Error {
 public:
  using Error::Error;
};

// Mathematically invalid object: non-PD covariance, vanishing density.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A synchronized reference was requested without a matching certificate.
class AdmissibilityError : public Error {
 public:
  using Error::Error;
};

// Schedule methods called out of order (current-step data used too early).
class SequencingError : public Error {
 public:
  using Error::Error;
};

// Malformed or incompatible file contents.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Invalid or incomplete configuration; the message names the offending key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Numerical failure during a run (divergence, non-finite values).
class RunError : public Error {
 public:
  RunError(const std::string& what, long step = -1)
      : Error(step >= 0 ? what + " at step " + std::to_string(step) : what),
        step_(step) {}

  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace vperturb
