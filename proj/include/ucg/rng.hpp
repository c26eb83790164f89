#ifndef UCG_RNG_HPP
#define UCG_RNG_HPP

#include <cstdint>
#include <random>

namespace ucg {

// Every stochastic component takes one of these explicitly; there is no
// global generator.
using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

/// Independent stream for a named sub-task, so adding draws in one place
/// does not shift another.
inline Rng derive(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

}  // namespace ucg

#endif  // UCG_RNG_HPP
