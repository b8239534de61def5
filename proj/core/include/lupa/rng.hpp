#pragma once

#include <cstdint>

namespace lupa {

/// SplitMix64 finalizer (Steele, Lea, Flood). Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives a generator seed from a master seed and a list of coordinates.
///
/// Each coordinate is hashed separately before being folded in, so
/// (seed, 1, 0) and (seed, 0, 1) land on unrelated states.
constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::uint64_t a,
                                    std::uint64_t b = 0,
                                    std::uint64_t c = 0) noexcept {
  std::uint64_t h = mix64(master ^ 0x6a09e667f3bcc908ULL);
  h = mix64(h ^ mix64(a + 0xbb67ae8584caa73bULL));
  h = mix64(h ^ mix64(b + 0x3c6ef372fe94f82bULL));
  h = mix64(h ^ mix64(c + 0xa54ff53a5f1d36f1ULL));
  return h;
}

/// Counter-based SplitMix64 stream. Portable and bit-reproducible; the
/// standard library distributions are avoided because their output is
/// implementation defined.
class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform integer in [0, bound) by Lemire's multiply-and-reject method.
  std::uint64_t below(std::uint64_t bound) noexcept;

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  /// Standard normal variate (Box-Muller, one value per call).
  double normal() noexcept;

 private:
  std::uint64_t state_;
};

}  // namespace lupa
