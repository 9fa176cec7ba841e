#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <span>
#include <vector>

namespace mcs {

inline constexpr double kTwoPi = 6.2831853071795864769;

/// SplitMix64 finalizer; bijective on 64-bit words.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Stream tags for seed derivation. Every source of randomness in a run is a
// named (tag, index) stream derived from the run seed, so independent pieces
// never share a stream and the draw order inside one piece cannot leak into
// another.
namespace streams {
inline constexpr std::uint64_t init = 1;       // initial state
inline constexpr std::uint64_t chain = 2;      // selection + acceptance decisions
inline constexpr std::uint64_t candidate = 3;  // per-candidate-slot generation
inline constexpr std::uint64_t resample = 4;   // in-filter resampling
inline constexpr std::uint64_t run = 5;        // per-repetition seeds in harnesses
inline constexpr std::uint64_t recover = 6;    // chain recovery from weighted sets
inline constexpr std::uint64_t data = 7;       // synthetic data sets
}  // namespace streams

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag,
                                 std::uint64_t index = 0) {
  return mix64(mix64(mix64(seed) + tag) + index);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

/// Uniform in [0, 1) with 53 random bits; stable across platforms.
inline double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller. Consumes exactly two words per draw.
inline double normal01(std::mt19937_64& g) {
  const double u1 = 1.0 - uniform01(g);  // (0, 1]
  const double u2 = uniform01(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

inline void fill_normal(std::mt19937_64& g, std::span<double> out) {
  for (double& v : out) v = normal01(g);
}

inline double uniform_in(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

/// One RNG per candidate slot. A slot keeps its stream for the whole run, so
/// whether candidates are generated batch-wise or component-by-component the
/// same values come out.
class StreamBank {
public:
  StreamBank(std::uint64_t seed, std::uint64_t tag, int n) {
    gens_.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      gens_.emplace_back(derive_seed(seed, tag, static_cast<std::uint64_t>(i)));
  }
  std::mt19937_64& operator[](int i) { return gens_[static_cast<std::size_t>(i)]; }
  int size() const { return static_cast<int>(gens_.size()); }

private:
  std::vector<std::mt19937_64> gens_;
};

}  // namespace mcs
