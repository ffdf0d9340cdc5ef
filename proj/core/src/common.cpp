#include "cyclemae/common.hpp"

#include <cmath>
#include <numbers>

namespace cyclemae {

double standard_normal(Rng& rng) {
    // 1 - u keeps the argument of log strictly positive.
    const double u1 = 1.0 - uniform_unit(rng);
    const double u2 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace cyclemae
