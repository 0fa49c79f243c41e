// rng.hpp: deterministic stream RNG.
//
// One root seed; every consumer derives an independent stream from
// (root, purpose label, index).  Streams are stable across runs and
// independent of batch partitioning, so per-sample results do not
// change when samples are processed in a different order.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace sbridge {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

// Derives the engine seed for stream (root, purpose, index).
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose,
                                 std::uint64_t index = 0) {
  std::uint64_t s = detail::splitmix64(root ^ detail::fnv1a64(purpose));
  return detail::splitmix64(s + detail::kGolden * (index + 1));
}

// A seeded random stream.  The engine is std::mt19937_64 (bit-exact output
// sequence fixed by the standard); uniform/normal conversion is done here
// rather than with std::*_distribution, whose output is
// implementation-defined.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : eng_(seed) {}
  RngStream(std::uint64_t root, std::string_view purpose,
            std::uint64_t index = 0)
      : eng_(derive_seed(root, purpose, index)) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0,1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform in (0,1]; safe as a log() argument.
  double uniform_pos() {
    return static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    // Multiply-shift; bias is negligible for the small n used here.
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
  }

  // Standard normal via Box-Muller; the spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform_pos();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sbridge
