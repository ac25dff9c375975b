#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace toxpipe::rng {

// Every stochastic step in the pipeline draws from a std::mt19937_64 stream
// seeded through the helpers below, and maps engine output to ranges with the
// explicit functions here instead of std::*_distribution (whose algorithms
// are implementation-defined). That keeps runs reproducible across standard
// libraries and lets reference reimplementations match bit for bit.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derived stream i of a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    return splitmix64(master ^ splitmix64(stream + 0x9e3779b97f4a7c15ULL));
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Continues an existing fingerprint; used to hash record streams.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::mt19937_64 engine(std::uint64_t seed) { return std::mt19937_64(seed); }

// Index in [0, n). Modulo mapping; bias is negligible for the sizes used here
// and the mapping is part of the pinned reproducibility contract.
inline std::size_t bounded(std::mt19937_64& eng, std::size_t n) {
    return static_cast<std::size_t>(eng() % n);
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Uniform in [-scale, scale).
inline double uniform_symmetric(std::mt19937_64& eng, double scale) {
    return (2.0 * uniform01(eng) - 1.0) * scale;
}

// Fisher-Yates, high index down, j = bounded(eng, i + 1).
template <typename T>
void shuffle(std::vector<T>& values, std::mt19937_64& eng) {
    for (std::size_t i = values.size(); i > 1; --i) {
        std::size_t j = bounded(eng, i);
        std::swap(values[i - 1], values[j]);
    }
}

}  // namespace toxpipe::rng
