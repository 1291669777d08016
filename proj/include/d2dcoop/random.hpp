#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace d2dcoop {

// All randomness flows through an explicit 64-bit Mersenne Twister. The
// engine itself is portable; the helpers below avoid the std distributions
// so that sample streams are bit-identical across standard libraries.
using Stream = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for an independent sub-stream, keyed by a parent seed and a path of
/// indices (replication, sweep point, role, ...).
template <typename... Keys>
std::uint64_t derive_seed(std::uint64_t seed, Keys... keys)
{
    std::uint64_t s = splitmix64(seed);
    ((s = splitmix64(s ^ splitmix64(static_cast<std::uint64_t>(keys) + 0x632be59bd9b4e019ULL))), ...);
    return s;
}

template <typename... Keys>
Stream make_stream(std::uint64_t seed, Keys... keys)
{
    return Stream(derive_seed(seed, keys...));
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Stream& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Stream& rng, double lo, double hi)
{
    return lo + (hi - lo) * uniform01(rng);
}

/// Unit-mean exponential draw.
inline double exponential1(Stream& rng)
{
    return -std::log1p(-uniform01(rng));
}

/// Uniform integer in [0, n).
inline std::size_t uniform_index(Stream& rng, std::size_t n)
{
    // Rejection sampling removes modulo bias.
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = rng();
    while (x >= limit) {
        x = rng();
    }
    return static_cast<std::size_t>(x % bound);
}

/// Fisher-Yates shuffle driven by uniform_index.
template <typename Container>
void shuffle(Container& c, Stream& rng)
{
    for (std::size_t i = c.size(); i > 1; --i) {
        const std::size_t j = uniform_index(rng, i);
        using std::swap;
        swap(c[i - 1], c[j]);
    }
}

} // namespace d2dcoop
