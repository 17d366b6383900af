#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace metatne {

// Seeded random stream. Every run derives all of its randomness from one
// user-visible seed through named sub-streams (split, struct, tasks, init,
// dropout, ...), so components can be reseeded and tested in isolation.
// Distribution code is hand-rolled on top of mt19937_64 so that identical
// seeds give identical draws regardless of the standard library build.
class Rng {
 public:
  Rng(uint64_t seed, std::string_view stream, uint64_t index = 0)
      : engine_(mix(seed, stream, index)) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), unbiased. n must be >= 1.
  uint64_t below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below(0)");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices drawn uniformly from [0, population), in draw order.
  std::vector<int> sample_indices(int population, int k);

 private:
  static uint64_t fnv1a(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (const char c : s) {
      h ^= static_cast<uint8_t>(c);
      h *= 1099511628211ull;
    }
    return h;
  }

  static uint64_t splitmix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  static uint64_t mix(uint64_t seed, std::string_view stream, uint64_t index) {
    return splitmix(splitmix(seed ^ fnv1a(stream)) + index);
  }

  std::mt19937_64 engine_;
};

inline std::vector<int> Rng::sample_indices(int population, int k) {
  if (k > population || k < 0)
    throw std::invalid_argument("sample_indices: k out of range");
  // Partial Fisher-Yates over an index array; O(population + k).
  std::vector<int> idx(population);
  for (int i = 0; i < population; ++i) idx[i] = i;
  std::vector<int> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(below(static_cast<uint64_t>(population - i)));
    std::swap(idx[i], idx[j]);
    out.push_back(idx[i]);
  }
  return out;
}

}  // namespace metatne
