#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace teledex {

/// 64-bit FNV-1a. Integrity only; not a cryptographic digest.
class Fnv1a64 {
public:
  static constexpr std::uint64_t kOffsetBasis = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

  void update(std::span<const std::uint8_t> bytes) {
    for (auto b : bytes) {
      hash_ ^= b;
      hash_ *= kPrime;
    }
  }
  void update(std::string_view text) {
    update(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  }
  std::uint64_t digest() const { return hash_; }

private:
  std::uint64_t hash_ = kOffsetBasis;
};

inline std::uint64_t fnv1a64(std::string_view text) {
  Fnv1a64 h;
  h.update(text);
  return h.digest();
}

/// 16 lowercase hex digits.
std::string to_hex(std::uint64_t value);

}  // namespace teledex
