#pragma once

#include <cstdint>
#include <random>

namespace probsurf {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent sub-seeds from a master seed.
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index)
{
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline double standard_normal(Rng& rng)
{
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(rng);
}

inline double uniform(Rng& rng, double lo, double hi)
{
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(rng);
}

} // namespace probsurf
