#pragma once

#include <cstdint>
#include <random>

namespace sgt {

/// Engine used everywhere a seed is accepted. Draws go through the helpers
/// below rather than <random> distributions so results do not depend on the
/// standard library implementation.
using Rng = std::mt19937_64;

/// Uniform in [0, 1).
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform in [lo, hi).
inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Uniform integer in [0, n).
inline int uniform_index(Rng& rng, int n) { return static_cast<int>(uniform01(rng) * n); }

}  // namespace sgt
