#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <utility>
#include <vector>

#include "stagerm/errors.hpp"

namespace stagerm {

// splitmix64. Chosen over std::mt19937 + <random> distributions because the
// standard distributions are implementation-defined: the same seed would give
// different datasets under libstdc++ and libc++. Everything here is plain
// integer arithmetic, so seeded outputs are byte-stable across platforms.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform integer in [lo, hi], both ends inclusive
    int64_t uniform_int(int64_t lo, int64_t hi) {
        if (lo > hi) throw ValidationError("uniform_int: empty range");
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        if (span == 0) return static_cast<int64_t>(next_u64()); // full 64-bit range
        // multiply-high bounding; the bias is < 2^-64 per draw and the result
        // is a pure function of the stream, which is what matters here
        unsigned __int128 wide = static_cast<unsigned __int128>(next_u64()) * span;
        return lo + static_cast<int64_t>(wide >> 64);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Box-Muller, cosine branch only so every call consumes exactly two draws
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = 1.0 - next_double();
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
    }

    bool bernoulli(double p) { return next_double() < p; }

    // Fisher-Yates; std::shuffle is unspecified, so spelled out here
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

// FNV-1a over (label, index) folded into the seed, then finalized once.
// Gives well-separated stream seeds for per-trajectory / per-worker draws.
inline uint64_t mix_seed(uint64_t seed, std::string_view label, uint64_t index = 0) {
    uint64_t h = 0xcbf29ce484222325ull;
    auto eat = [&h](uint64_t byte) {
        h ^= byte & 0xff;
        h *= 0x100000001b3ull;
    };
    for (char c : label) eat(static_cast<uint64_t>(static_cast<unsigned char>(c)));
    for (int i = 0; i < 8; ++i) eat(seed >> (8 * i));
    for (int i = 0; i < 8; ++i) eat(index >> (8 * i));
    // splitmix finalizer to spread FNV's weak low bits
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
    return h ^ (h >> 31);
}

inline Rng derive_stream(uint64_t seed, std::string_view label, uint64_t index = 0) {
    return Rng(mix_seed(seed, label, index));
}

} // namespace stagerm
