#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace markovtype {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream for a path below a master seed, e.g. (seed, epoch, batch, trial).
inline Rng make_stream(std::uint64_t master, std::initializer_list<std::uint64_t> path = {}) {
  std::uint64_t s = splitmix64(master);
  for (std::uint64_t p : path) s = splitmix64(s ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return Rng(s);
}

// Uniform in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::int64_t uniform_index(Rng& rng, std::int64_t n) {
  auto i = static_cast<std::int64_t>(uniform01(rng) * static_cast<double>(n));
  return i < n ? i : n - 1;
}

template <typename T>
void shuffle_in_place(std::vector<T>& items, Rng& rng) {
  for (std::int64_t i = static_cast<std::int64_t>(items.size()) - 1; i > 0; --i) {
    std::swap(items[i], items[uniform_index(rng, i + 1)]);
  }
}

}  // namespace markovtype
