#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "otfsra/types.hpp"

namespace otfsra {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Streams are keyed by (seed, trial, ue, ap, purpose); a trial never depends on
// the order in which other trials or pairs were generated.
enum class Stream : std::uint64_t { paths = 1, preamble = 2, data = 3, noise = 4, activity = 5, position = 6, fixture = 7 };

inline constexpr std::uint64_t kNone = 0xffffffffULL;

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t trial, std::uint64_t ue, std::uint64_t ap,
                                   Stream purpose) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t v : {trial, ue, ap, static_cast<std::uint64_t>(purpose)}) h = splitmix64(h ^ splitmix64(v));
  return std::mt19937_64(h);
}

template <class Rng>
cplx complex_normal(Rng& rng, double variance) {
  std::normal_distribution<double> nd(0.0, std::sqrt(variance / 2.0));
  const double re = nd(rng);
  const double im = nd(rng);
  return {re, im};
}

template <class Rng>
cplx qpsk(Rng& rng) {
  std::uniform_int_distribution<int> pick(0, 3);
  const int s = pick(rng);
  const double a = 1.0 / std::sqrt(2.0);
  return {(s & 1) ? a : -a, (s & 2) ? a : -a};
}

}  // namespace otfsra
