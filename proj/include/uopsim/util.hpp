#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace uopsim {

template <typename T>
constexpr T ceil_div(T a, T b) {
    return (a + b - 1) / b;
}

// splitmix64, used for deterministic tensor input synthesis.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// uniform float in [-1, 1)
inline float unit_float(uint64_t& state) {
    return static_cast<float>((splitmix64(state) >> 40) * (1.0 / (1ULL << 23))) * 2.0f - 1.0f;
}

inline uint64_t fnv1a(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace uopsim
