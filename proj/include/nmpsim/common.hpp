#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace nmpsim {

// Error hierarchy. Library code throws; the CLI catches at the top level.
struct SimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : SimError {
    ParseError(const std::string& msg, size_t line)
        : SimError("parse error at line " + std::to_string(line) + ": " + msg), line_no(line) {}
    size_t line_no;
};

struct ConfigError : SimError {
    using SimError::SimError;
};

struct InvalidParameter : SimError {
    using SimError::SimError;
};

struct InvalidAddress : SimError {
    using SimError::SimError;
};

struct SegFault : SimError {
    using SimError::SimError;
};

struct OutOfMemory : SimError {
    using SimError::SimError;
};

struct InvalidPage : SimError {
    using SimError::SimError;
};

struct IoError : SimError {
    using SimError::SimError;
};

// Deterministic RNG helpers. mt19937_64 output is pinned by the standard;
// the mappings below avoid the implementation-defined std::*_distribution.
inline double u01(std::uint64_t raw) { return (raw >> 11) * (1.0 / 9007199254740992.0); }

template <class Rng>
double draw_u01(Rng& rng) {
    return u01(rng());
}

template <class Rng>
std::uint64_t draw_below(Rng& rng, std::uint64_t n) {
    return n ? rng() % n : 0;
}

// Stream splitting for independent seeded components (splitmix64).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline bool is_pow2(std::uint64_t v) { return v && !(v & (v - 1)); }

inline int log2_exact(std::uint64_t v) {
    int b = 0;
    while ((1ULL << b) < v) ++b;
    return b;
}

}  // namespace nmpsim
