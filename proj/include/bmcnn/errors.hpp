#pragma once

#include <stdexcept>
#include <string>

namespace bmcnn {

/// Malformed or unsupported file contents (PGM/PFM headers, payloads).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two operands whose shapes must agree do not.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A coordinate or window falls outside the image it refers to.
class BoundsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Aggregation found a pixel that no patch covers.
class CoverageError : public std::runtime_error {
 public:
  CoverageError(int row, int col)
      : std::runtime_error("pixel (" + std::to_string(row) + ", " + std::to_string(col) +
                           ") is not covered by any patch"),
        row_(row),
        col_(col) {}
  int row() const { return row_; }
  int col() const { return col_; }

 private:
  int row_;
  int col_;
};

/// Training data that cannot be used (missing directory, no images, undersized images).
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration values (spec violations, bad flags).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values during training or inference.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failures decoding a serialized network.
class WeightFormatError : public std::runtime_error {
 public:
  enum class Kind { MagicMismatch, VersionMismatch, ShapeInconsistency, Truncated, ChecksumMismatch };

  WeightFormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace bmcnn
