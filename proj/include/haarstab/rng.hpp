#pragma once

#include <cstdint>

namespace haarstab {

/// Counter-based deterministic randomness. Every random quantity in the
/// library is a pure function of a seed and a handful of integer keys, so
/// results are reproducible and independent of evaluation order.
namespace rng {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t mix(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

inline std::uint64_t hash2(std::uint64_t seed, std::uint64_t a) {
    return mix(seed + kGolden + a * 0xd1342543de82ef95ULL);
}

inline std::uint64_t hash3(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return hash2(hash2(seed, a), b);
}

inline std::uint64_t hash4(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                           std::uint64_t c) {
    return hash2(hash3(seed, a, b), c);
}

/// Map a hash to [-1, 1).
inline double toSymmetric(std::uint64_t h) {
    return static_cast<double>(h >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

/// Map a hash to {-1, +1}.
inline int toSign(std::uint64_t h) { return (h >> 63) ? -1 : 1; }

/// Row-major accelerated two-key hash: hoist the first key out of inner loops.
struct RowState {
    std::uint64_t state;
    explicit RowState(std::uint64_t seed, std::uint64_t row) : state(hash2(seed, row)) {}
    std::uint64_t at(std::uint64_t col) const { return hash2(state, col); }
};

}  // namespace rng
}  // namespace haarstab
