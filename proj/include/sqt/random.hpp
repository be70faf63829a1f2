#pragma once

#include <cstdint>
#include <random>

namespace sqt {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used to derive well-separated per-sample seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of sample `index` in an ensemble driven by `master`.
constexpr std::uint64_t sample_seed(std::uint64_t master, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

}  // namespace sqt
