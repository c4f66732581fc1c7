#pragma once

#include <cstdint>

namespace mcsfqf {

// Counter-based RNG built on splitmix64 finalizers. Every draw is a pure
// function of (seed, tag, counters), so output never depends on call order
// and runs are reproducible bit-for-bit.

namespace rng_tag {
constexpr std::uint64_t kInit = 0x11;
constexpr std::uint64_t kPopulation = 0x22;
constexpr std::uint64_t kEnv = 0x33;
constexpr std::uint64_t kExplore = 0x44;
constexpr std::uint64_t kReplay = 0x55;
constexpr std::uint64_t kTest = 0x66;
}  // namespace rng_tag

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash4(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ a);
    h = mix64(h ^ b);
    h = mix64(h ^ c);
    return h;
}

// Uniform in [0, 1).
inline double u01(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return static_cast<double>(hash4(seed, a, b, c) >> 11) * 0x1.0p-53;
}

// Uniform in [-1, 1).
inline double usym(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return 2.0 * u01(seed, a, b, c) - 1.0;
}

// Sequenced stream for consumers that draw a variable number of values
// (exploration, replay sampling, environment rewards). The counter is part
// of persisted run state.
struct RngStream {
    std::uint64_t seed = 0;
    std::uint64_t tag = 0;
    std::uint64_t counter = 0;

    std::uint64_t next_u64() { return hash4(seed, tag, counter++, 0); }
    double next_u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    // Unbiased enough for n << 2^64.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }
};

}  // namespace mcsfqf
