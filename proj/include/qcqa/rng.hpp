#ifndef QCQA_RNG_HPP
#define QCQA_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace qcqa {

// All stochastic code draws through the helpers below instead of the standard
// <random> distributions, whose output is implementation-defined. mt19937_64
// itself is bit-identical everywhere, so seeded runs reproduce across
// platforms and standard libraries.
using Rng = std::mt19937_64;

// Uniform integer in [0, bound), unbiased via rejection sampling.
inline std::uint64_t next_below(Rng& rng, std::uint64_t bound)
{
    if (bound <= 1) {
        return 0;
    }
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw = rng();
    while (draw >= limit) {
        draw = rng();
    }
    return draw % bound;
}

// Uniform double in [0, 1) with 53-bit resolution.
inline double next_unit(Rng& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool next_bool(Rng& rng, double prob)
{
    return next_unit(rng) < prob;
}

// Standard normal deviate, Box-Muller. Always consumes exactly two draws.
inline double next_normal(Rng& rng)
{
    const double u1 = 1.0 - next_unit(rng); // in (0, 1]
    const double u2 = next_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace qcqa

#endif
