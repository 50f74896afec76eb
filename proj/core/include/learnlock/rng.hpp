#pragma once

#include <cstdint>
#include <random>

namespace learnlock {

/// All randomness in the project flows through explicitly seeded engines so
/// that every pipeline stage is replayable bit for bit on one platform.
using Rng = std::mt19937_64;

/// Derives an independent stream from a base seed and a stream tag
/// (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline float uniform(Rng& rng, float lo, float hi) {
    std::uniform_real_distribution<float> d(lo, hi);
    return d(rng);
}

inline float gaussian(Rng& rng, float mean, float stddev) {
    std::normal_distribution<float> d(mean, stddev);
    return d(rng);
}

}  // namespace learnlock
