#pragma once

#include <stdexcept>
#include <string>

namespace duedl {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or extents.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Operand outside the mathematical domain of an op (log of x <= 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced, degenerate conflict, training divergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file, bad magic, unknown version.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Dataset content that violates its invariants (missing files, bad labels).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid or mutually inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the gradient tape (double backward, detached loss).
class TapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace duedl
