#pragma once

#include <cstdint>
#include <cstddef>
#include <string>

namespace tmld {

// Minimal SHA-256 for manifest hashing (FIPS 180-4).
class Sha256 {
 public:
  Sha256() { reset(); }
  void reset();
  void update(const void* data, size_t len);
  // Hex digest; finalizes an internal copy, so the object stays usable.
  std::string hex_digest() const;

  static std::string hash_hex(const std::string& bytes);

 private:
  void process_block(const uint8_t* block);
  uint32_t state_[8];
  uint64_t bitlen_ = 0;
  uint8_t buf_[64];
  size_t buflen_ = 0;
};

}  // namespace tmld
