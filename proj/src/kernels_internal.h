#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace statefuzz::kernels {

inline uint64_t CoverageHashStep(uint64_t h, size_t index, uint8_t value) {
  uint64_t x = (static_cast<uint64_t>(index) << 8) | value;
  x *= 0x9E3779B97F4A7C15ULL;
  return (h ^ (x >> 29) ^ x) * 0x100000001B3ULL;
}

inline constexpr uint64_t kCoverageHashSeed = 0xcbf29ce484222325ULL;

}  // namespace statefuzz::kernels
