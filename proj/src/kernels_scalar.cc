#include <array>

#include "kernels_internal.h"
#include "statefuzz/kernels.h"

namespace statefuzz::kernels {
namespace {

constexpr std::array<uint8_t, 256> MakeBucketLut() {
  std::array<uint8_t, 256> lut{};
  for (int v = 0; v < 256; ++v) {
    uint8_t b = 0;
    if (v == 0) b = 0;
    else if (v == 1) b = 1;
    else if (v == 2) b = 2;
    else if (v == 3) b = 4;
    else if (v < 8) b = 8;
    else if (v < 16) b = 16;
    else if (v < 32) b = 32;
    else if (v < 128) b = 64;
    else b = 128;
    lut[v] = b;
  }
  return lut;
}

constexpr auto kBucketLut = MakeBucketLut();
constexpr uint32_t kPairScore[4] = {0, 1, 2, 6};

void ClassifyCountsScalar(std::span<uint8_t> map) {
  for (auto& v : map) v = kBucketLut[v];
}

NewBits UpdateVirginScalar(std::span<const uint8_t> trace,
                           std::span<uint8_t> virgin) {
  NewBits ret = NewBits::kNone;
  for (size_t i = 0; i < trace.size(); ++i) {
    const uint8_t t = trace[i];
    if (t == 0) continue;
    const uint8_t v = virgin[i];
    if ((t & v) == 0) continue;
    if (v == 0xFF) {
      ret = NewBits::kNewEdge;
    } else if (ret == NewBits::kNone) {
      ret = NewBits::kNewHitCount;
    }
    virgin[i] = v & static_cast<uint8_t>(~t);
  }
  return ret;
}

size_t CountNonZeroScalar(std::span<const uint8_t> map) {
  size_t n = 0;
  for (uint8_t v : map) n += v != 0;
  return n;
}

uint32_t TlshBodyDistanceScalar(const uint8_t* a, const uint8_t* b) {
  uint32_t total = 0;
  for (int i = 0; i < 32; ++i) {
    for (int k = 0; k < 4; ++k) {
      const int x = (a[i] >> (2 * k)) & 3;
      const int y = (b[i] >> (2 * k)) & 3;
      total += kPairScore[x > y ? x - y : y - x];
    }
  }
  return total;
}

uint64_t CoverageHashScalar(std::span<const uint8_t> map) {
  uint64_t h = kCoverageHashSeed;
  for (size_t i = 0; i < map.size(); ++i) {
    if (map[i] != 0) h = CoverageHashStep(h, i, map[i]);
  }
  return h;
}

}  // namespace

const KernelTable& Scalar() {
  static const KernelTable table{
      "scalar",           ClassifyCountsScalar,  UpdateVirginScalar,
      CoverageHashScalar, CountNonZeroScalar,    TlshBodyDistanceScalar,
  };
  return table;
}

}  // namespace statefuzz::kernels
