#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>

namespace gprl {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30U)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27U)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31U);
}

/// Independent stream for (seed, a, b); used for per-slot generators so that
/// results never depend on the order in which slots are processed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept
{
    return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0)
{
    return Rng{derive_seed(seed, a, b)};
}

/// Uniform real in [lo, hi). std::uniform_real_distribution is implementation-defined,
/// this is not, which keeps saved experiments reproducible across standard libraries.
inline double uniform(Rng& rng, double lo, double hi)
{
    auto const u = static_cast<double>(rng() >> 11U) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

/// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n)
{
    return static_cast<std::size_t>(rng() % n);
}

/// Standard normal via Box-Muller (same portability argument as uniform()).
inline double standard_normal(Rng& rng)
{
    double u1 = 0.0;
    do {
        u1 = uniform(rng, 0.0, 1.0);
    } while (u1 <= 0.0);
    double const u2 = uniform(rng, 0.0, 1.0);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

} // namespace gprl
