#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cloak {

// Portable seeded generator. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; the real-valued draws below avoid the
// implementation-defined std distributions so sequences match across
// platforms.
class SeedableRng {
 public:
  static constexpr std::string_view kAlgorithmId = "mt19937_64/53bit-uniform";

  explicit SeedableRng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::string_view algorithm_id() const { return kAlgorithmId; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Independent child stream keyed by (seed, a, b).
  SeedableRng split(std::uint64_t a, std::uint64_t b = 0) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace cloak
