#pragma once

#include <cstdint>

namespace nfcsi {

// Counter-based pseudo-random numbers. Every draw is a pure function of
// (seed, stream, index), so sample generation parallelizes across indices
// and resumed runs replay the exact same sequences without carrying state.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum class RngStream : std::uint64_t {
  kGeometry = 1,
  kWeightInit = 2,
  kShuffle = 3,
  kTest = 100,
};

// Stateless generator: the n-th value of a (seed, stream, key) substream.
inline std::uint64_t rng_u64(std::uint64_t seed, RngStream stream,
                             std::uint64_t key, std::uint64_t n = 0) {
  std::uint64_t h = splitmix64(seed ^ 0x6a09e667f3bcc909ULL);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  h = splitmix64(h ^ key);
  return splitmix64(h ^ n);
}

// Uniform double in [0, 1) from the top 53 bits; bit-exact on every platform.
inline double to_unit_double(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline double rng_uniform(std::uint64_t seed, RngStream stream,
                          std::uint64_t key, std::uint64_t n, double lo,
                          double hi) {
  return lo + to_unit_double(rng_u64(seed, stream, key, n)) * (hi - lo);
}

// Small stateful wrapper for call sites that want a sequence.
class Rng {
 public:
  Rng(std::uint64_t seed, RngStream stream, std::uint64_t key = 0)
      : seed_(seed), stream_(stream), key_(key) {}

  std::uint64_t next_u64() { return rng_u64(seed_, stream_, key_, n_++); }
  double next_unit() { return to_unit_double(next_u64()); }
  double next_uniform(double lo, double hi) {
    return lo + next_unit() * (hi - lo);
  }
  // Uniform integer in [0, m) via rejection-free 128-bit multiply.
  std::uint64_t next_below(std::uint64_t m) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * m) >> 64);
  }

 private:
  std::uint64_t seed_;
  RngStream stream_;
  std::uint64_t key_;
  std::uint64_t n_ = 0;
};

}  // namespace nfcsi
