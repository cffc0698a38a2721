#pragma once

#include <stdexcept>
#include <string>

namespace msbridge {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Operand shapes are incompatible (names both shapes in the message).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An API precondition was violated (non-scalar backward, reused tape,
/// singleton set for an unbiased estimator, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration: bad range, unknown key, bad generator id.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Domain label id outside [0, K].
class LabelError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required, diverged integration,
/// non-PSD covariance.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Training aborted: non-finite gradient or loss.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk data (PGM header, checkpoint framing, CRC mismatch).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed file whose declared contents disagree with the expected
/// model topology.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure: missing path, unreadable or unwritable file.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace msbridge
