#pragma once

#include <cstdint>
#include <vector>

namespace isq {

// Counter-free xoshiro256** stream seeded through splitmix64. Both algorithms
// are fixed bit-for-bit, so a given seed produces the same draw sequence on
// every platform, which the reproducibility contract of the whole project
// rests on. Do not swap in std::mt19937 here: its distributions are not
// portable across standard library implementations.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = splitmix64(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n). Rejection sampling keeps the draw exact.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  // Independent stream for a named sub-component; tag values are fixed at the
  // call sites so derived streams stay stable across runs.
  SeededRng fork(std::uint64_t tag) {
    std::uint64_t x = next_u64() ^ (tag * 0x9e3779b97f4a7c15ULL);
    return SeededRng(splitmix64(x));
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

  std::uint64_t state_[4];
};

// Stable seed derivation for (experiment seed, role) pairs.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t role) {
  std::uint64_t x = base ^ (role * 0xd1342543de82ef95ULL);
  x ^= x >> 32;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  return x;
}

}  // namespace isq
