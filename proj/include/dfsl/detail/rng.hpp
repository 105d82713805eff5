#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dfsl::detail {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Hierarchical stream key: the same (base, path) always yields the same seed,
/// and distinct paths yield unrelated streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path)
{
    std::uint64_t h = splitmix64(base);
    for (auto p : path) h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    return h;
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t base, std::initializer_list<std::uint64_t> path)
{
    return Engine(derive_seed(base, path));
}

// Stream tags keep unrelated draws apart.
enum StreamTag : std::uint64_t {
    tag_coefficients = 1,
    tag_patterns = 2,
    tag_noise = 3,
    tag_split = 4,
    tag_kmeans = 5,
    tag_benchmark = 6,
};

} // namespace dfsl::detail
