#pragma once

#include <cstdint>
#include <random>

namespace statefuzz {

// All campaign randomness flows from one of these, so a seed reproduces a run.
using Rng = std::mt19937_64;

// Uniform in [0, n); n must be > 0. Portable (no std distributions).
inline uint64_t RandBelow(Rng& rng, uint64_t n) { return rng() % n; }

// Uniform in [0, 1).
inline double RandUnit(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace statefuzz
