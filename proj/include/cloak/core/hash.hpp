#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace cloak {

// 64-bit FNV-1a, used for config and corpus fingerprints.
class Fnv1a {
 public:
  void update(std::span<const std::byte> bytes);
  void update(std::string_view text);
  void update(double value);
  void update(std::int64_t value);
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

// 16 lowercase hex digits.
std::string hex64(std::uint64_t value);
// Inverse of hex64; throws std::invalid_argument on malformed text.
std::uint64_t parse_hex64(std::string_view text);

}  // namespace cloak
