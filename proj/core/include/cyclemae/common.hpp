#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace cyclemae {

/// Dense row-major matrix used for every numeric array in the model.
/// Rows are tokens (or samples), columns are features.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent seeds from a base seed
/// and a tuple of counters (epoch, step, sample, ...).
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

template <typename... Parts>
constexpr std::uint64_t derive_seed(std::uint64_t base, Parts... parts) {
    std::uint64_t h = mix_seed(base);
    ((h = mix_seed(h ^ static_cast<std::uint64_t>(parts))), ...);
    return h;
}

/// Uniform integer in [0, n). Rejection sampling on the raw 64-bit stream,
/// so the mapping is identical on every standard library.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    if (n == 0) {
        throw std::invalid_argument("uniform_index: empty range");
    }
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = Rng::max() - (Rng::max() % bound + 1) % bound;
    std::uint64_t draw = rng();
    while (draw > limit) {
        draw = rng();
    }
    return static_cast<std::size_t>(draw % bound);
}

/// Uniform real in [0, 1) with 53 random bits.
inline double uniform_unit(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal draw (Box-Muller, one value per call, no cached state).
double standard_normal(Rng& rng);

}  // namespace cyclemae
