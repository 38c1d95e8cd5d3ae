#pragma once

#include <stdexcept>
#include <string>

namespace dair {

// Shape or configuration violations: the caller handed us something that can
// never be valid (mismatched dims, even kernel extent, bad variant...).
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed external data: images, manifests, checkpoints. Carries the byte
// offset of the first bad byte when known (-1 otherwise).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what, long long byte_offset = -1)
      : std::runtime_error(byte_offset >= 0
                               ? what + " (byte offset " + std::to_string(byte_offset) + ")"
                               : what),
        byte_offset_(byte_offset) {}

  long long byte_offset() const { return byte_offset_; }

 private:
  long long byte_offset_;
};

// Non-finite values where finite ones are required (NaN loss, NaN gradient).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dair
