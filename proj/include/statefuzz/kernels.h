#pragma once

// Data-parallel inner loops of the fuzzer: coverage-map bucketing, virgin-map
// comparison, coverage signatures and the TLSH body distance. Each kernel has
// a scalar reference implementation and, on x86-64, an AVX2 variant. The
// variant is chosen once at startup from CPUID; setting the environment
// variable STATEFUZZ_KERNELS=scalar forces the reference path.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace statefuzz::kernels {

// Result of comparing one execution's trace against the virgin map.
enum class NewBits : uint8_t {
  kNone = 0,
  kNewHitCount = 1,  // a known edge reached a new hit-count bucket
  kNewEdge = 2,      // an edge never seen before
};

struct KernelTable {
  std::string_view name;
  // In place: raw hit counts -> AFL-style bucket bits
  // (0, 1, 2, 3, 4-7, 8-15, 16-31, 32-127, 128+ -> 0,1,2,4,8,16,32,64,128).
  void (*classify_counts)(std::span<uint8_t> map);
  // Clears virgin bits covered by `trace` and reports what was new.
  // Both spans must have the same length, a multiple of 32.
  NewBits (*update_virgin)(std::span<const uint8_t> trace,
                           std::span<uint8_t> virgin);
  // Order-sensitive hash over (index, value) for every non-zero byte.
  uint64_t (*coverage_hash)(std::span<const uint8_t> map);
  size_t (*count_nonzero)(std::span<const uint8_t> map);
  // Sum over the 128 two-bit codes of the per-code TLSH difference score
  // (|a-b| of 1 -> 1, 2 -> 2, 3 -> 6).
  uint32_t (*tlsh_body_distance)(const uint8_t* a, const uint8_t* b);
};

const KernelTable& Scalar();
// nullptr when the AVX2 variant is not compiled in or the CPU lacks AVX2.
const KernelTable* Avx2();
// The table selected for this process.
const KernelTable& Active();

}  // namespace statefuzz::kernels
