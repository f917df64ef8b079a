#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ribreg::rng {

// All randomness in the library goes through these helpers instead of
// std::*_distribution so that a fixed seed yields the same sequence on
// every platform and standard library.

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed) { return Engine{seed}; }

/// Uniform double in [0, 1).
inline double uniform01(Engine& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

/// Uniform double in [lo, hi).
inline double uniform(Engine& g, double lo, double hi) {
    return lo + (hi - lo) * uniform01(g);
}

/// Uniform integer in [0, n). n must be > 0.
inline std::uint64_t below(Engine& g, std::uint64_t n) {
    return g() % n;
}

/// Standard normal via Box-Muller.
inline double normal(Engine& g) {
    double u1 = uniform01(g);
    double u2 = uniform01(g);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

/// Fisher-Yates shuffle with the portable engine.
template <typename T>
void shuffle(std::vector<T>& v, Engine& g) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(below(g, i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace ribreg::rng
