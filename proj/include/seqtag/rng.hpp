#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace seqtag {

// Deterministic cross-platform random source.
//
// State machine: the engine is std::mt19937_64 seeded directly with the
// 64-bit seed; its output sequence is fixed by the C++ standard. All
// derived draws below are defined here rather than via the standard
// distribution classes (whose streams are implementation-defined):
//
//   next()       -> raw 64-bit engine output
//   uniform()    -> (next() >> 11) * 2^-53, in [0, 1)
//   uniform(a,b) -> a + (b - a) * uniform()
//   index(n)     -> rejection-sampled bound: draw next() until
//                   x < 2^64 - (2^64 mod n), return x mod n
//   bernoulli(p) -> uniform() < p
//   shuffle      -> Fisher-Yates from the back using index(i + 1)
//
// Identical seeds therefore produce identical streams everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next() { return engine_(); }

  double uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  std::uint64_t index(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

}  // namespace seqtag
