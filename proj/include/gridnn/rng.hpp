#pragma once

#include <cstdint>

namespace gridnn {

// SplitMix64: integer-only generator, identical output on every platform.
// Used everywhere a --seed flag exists so artifacts are bit-reproducible.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n). Lemire multiply-shift; n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

 private:
  std::uint64_t state_;
};

// Stream splitting: stream(seed, id) yields independent generators whose
// output does not depend on the order streams are consumed in. Sample i of a
// dataset always draws from stream(seed, i), so parallel generation (if ever
// enabled) matches sequential output byte for byte.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream_id) {
  SplitMix64 m(seed ^ (0x9E3779B97F4A7C15ULL * (stream_id + 1)));
  return m.next();
}

inline SplitMix64 stream_rng(std::uint64_t seed, std::uint64_t stream_id) {
  return SplitMix64(mix_seed(seed, stream_id));
}

}  // namespace gridnn
