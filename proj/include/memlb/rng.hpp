#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace memlb {

// SplitMix64 finalizer. Used to turn a root seed into per-replication seeds
// and to decorrelate user seeds before they reach the Mersenne Twister.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Replication seeds for a root seed: s_i = splitmix64(root + i), i = 0..count-1.
inline std::vector<std::uint64_t> derive_seeds(std::uint64_t root, std::size_t count) {
  std::vector<std::uint64_t> seeds(count);
  for (std::size_t i = 0; i < count; ++i) seeds[i] = splitmix64(root + i);
  return seeds;
}

// Single sequential random stream. std::mt19937_64's output sequence is fixed
// by the standard and the variate transforms below are written out by hand,
// so a given seed reproduces the same draws with any conforming toolchain.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  // Uniform integer in [0, n), unbiased (Lemire's rejection).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t x = engine_();
      const unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
      if (static_cast<std::uint64_t>(m) >= threshold) return static_cast<std::uint64_t>(m >> 64);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace memlb
