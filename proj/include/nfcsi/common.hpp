#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace nfcsi {

inline constexpr int kVersionMajor = 0;
inline constexpr int kVersionMinor = 1;

// Error taxonomy. Everything user-recoverable derives from Error so the CLI
// can catch one type and print the message.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values, ranges, or key names.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Mathematical domain violations (indices out of range, zero-energy inputs).
class DomainError : public Error {
 public:
  using Error::Error;
};

// User placed inside/on the antenna array: Eq.-level distance undefined.
class DegenerateGeometryError : public DomainError {
 public:
  using DomainError::DomainError;
};

// Tensor/matrix shape mismatches.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// File format violations, checksum mismatches, truncation.
class IoError : public Error {
 public:
  using Error::Error;
};

class NormalizationError : public Error {
 public:
  using Error::Error;
};

}  // namespace nfcsi
