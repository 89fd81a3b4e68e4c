#include "cloak/core/hash.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <stdexcept>

namespace cloak {

void Fnv1a::update(std::span<const std::byte> bytes) {
  for (std::byte b : bytes) {
    state_ ^= static_cast<std::uint64_t>(b);
    state_ *= 0x100000001b3ULL;
  }
}

void Fnv1a::update(std::string_view text) { update(std::as_bytes(std::span(text.data(), text.size()))); }

void Fnv1a::update(double value) {
  const auto bits = std::bit_cast<std::uint64_t>(value);
  update(static_cast<std::int64_t>(bits));
}

void Fnv1a::update(std::int64_t value) {
  std::byte buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<std::byte>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff);
  update(std::span<const std::byte>(buf, 8));
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::uint64_t parse_hex64(std::string_view text) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v, 16);
  if (text.empty() || ec != std::errc() || end != text.data() + text.size()) {
    throw std::invalid_argument("malformed hex digest '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace cloak
