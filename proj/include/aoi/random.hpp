#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace aoi {

// Every stochastic component takes a caller-owned stream of this type.
using Rng = std::mt19937_64;

// Seeds a replicate stream from a base seed and a replicate index so that
// streams for different replicates do not overlap in practice.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32), 0x414f49u};
  return Rng(seq);
}

// Uniform on [0,1) with 53 random bits. Unlike std::uniform_real_distribution
// the mapping is fixed, so traces are identical across standard libraries.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

// Index drawn from a probability vector by inverse CDF. Rounding slack at the
// top end goes to the last index with positive mass.
inline std::size_t categorical(Rng& rng, std::span<const double> probs) {
  const double u = uniform01(rng);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = i;
    acc += probs[i];
    if (u < acc) return i;
  }
  return last_positive;
}

// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
  return i < n ? i : n - 1;
}

}  // namespace aoi
