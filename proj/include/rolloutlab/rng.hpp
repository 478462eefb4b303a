#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace rolloutlab {

/// Purposes that keep random streams apart. Every random draw in the library
/// comes from a stream keyed by (run seed, purpose, ...ids), so adding a
/// consumer never shifts the draws of another one.
enum class Stream : std::uint64_t {
  stochastic = 1,
  latr_continuation = 2,
  latr_padding = 3,
  latr_variant = 4,
  selection_pool = 5,
  batch = 6,
  task_train = 7,
  task_val = 8,
  eval = 9,
  hybrid_std = 10,
  fixture = 11,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

inline std::uint64_t stream_seed(std::uint64_t seed, Stream s, std::uint64_t a = 0, std::uint64_t b = 0) {
  return mix_seed(seed, {static_cast<std::uint64_t>(s), a, b});
}

/// Thin wrapper over mt19937_64 with portable conversions (the standard
/// distributions are implementation-defined, which would break byte-identical
/// outputs across standard libraries).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return uniform() < p;
  }

  /// Uniform integer in [0, n); n must be positive.
  std::size_t below(std::size_t n) {
    // rejection removes modulo bias
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return static_cast<std::size_t>(x % bound);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace rolloutlab
