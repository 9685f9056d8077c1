#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>

namespace cat {

// All randomized operations take an explicit engine so runs are reproducible
// by seed and parallel experiments can split seeds deterministically.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

/// splitmix64 step; derives independent per-stream seeds from a master seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

/// Beta(a, b) via the two-gamma construction.
inline double sample_beta(Rng& rng, double a, double b) {
    if (a <= 0.0 || b <= 0.0) throw std::invalid_argument("sample_beta: parameters must be positive");
    std::gamma_distribution<double> ga(a, 1.0);
    std::gamma_distribution<double> gb(b, 1.0);
    const double x = ga(rng);
    const double y = gb(rng);
    const double s = x + y;
    if (s <= 0.0) return 0.5;  // both draws underflowed
    return x / s;
}

}  // namespace cat
