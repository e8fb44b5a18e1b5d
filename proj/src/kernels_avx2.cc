#include "kernels_internal.h"
#include "statefuzz/kernels.h"

#if defined(__x86_64__) || defined(_M_X64)
#define STATEFUZZ_HAVE_AVX2 1
#include <immintrin.h>
#else
#define STATEFUZZ_HAVE_AVX2 0
#endif

namespace statefuzz::kernels {

#if STATEFUZZ_HAVE_AVX2
namespace {

#define SF_AVX2 __attribute__((target("avx2")))

// Unsigned a >= b, bytewise.
SF_AVX2 inline __m256i GeU8(__m256i a, __m256i b) {
  return _mm256_cmpeq_epi8(_mm256_max_epu8(a, b), a);
}

SF_AVX2 void ClassifyCountsAvx2(std::span<uint8_t> map) {
  const size_t n = map.size() & ~size_t{31};
  uint8_t* p = map.data();
  const __m256i zero = _mm256_setzero_si256();
  for (size_t i = 0; i < n; i += 32) {
    __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(p + i));
    if (_mm256_testz_si256(v, v)) continue;
    // Walk the thresholds upward; each one that holds overrides the result.
    __m256i r = zero;
    r = _mm256_blendv_epi8(r, _mm256_set1_epi8(1), GeU8(v, _mm256_set1_epi8(1)));
    r = _mm256_blendv_epi8(r, _mm256_set1_epi8(2), GeU8(v, _mm256_set1_epi8(2)));
    r = _mm256_blendv_epi8(r, _mm256_set1_epi8(4), GeU8(v, _mm256_set1_epi8(3)));
    r = _mm256_blendv_epi8(r, _mm256_set1_epi8(8), GeU8(v, _mm256_set1_epi8(4)));
    r = _mm256_blendv_epi8(r, _mm256_set1_epi8(16), GeU8(v, _mm256_set1_epi8(8)));
    r = _mm256_blendv_epi8(r, _mm256_set1_epi8(32), GeU8(v, _mm256_set1_epi8(16)));
    r = _mm256_blendv_epi8(r, _mm256_set1_epi8(64), GeU8(v, _mm256_set1_epi8(32)));
    r = _mm256_blendv_epi8(r, _mm256_set1_epi8(static_cast<char>(128)),
                           GeU8(v, _mm256_set1_epi8(static_cast<char>(128))));
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(p + i), r);
  }
  if (n != map.size()) Scalar().classify_counts(map.subspan(n));
}

SF_AVX2 NewBits UpdateVirginAvx2(std::span<const uint8_t> trace,
                                 std::span<uint8_t> virgin) {
  const size_t n = trace.size() & ~size_t{31};
  const uint8_t* t = trace.data();
  uint8_t* v = virgin.data();
  const __m256i ones = _mm256_set1_epi8(static_cast<char>(0xFF));
  const __m256i zero = _mm256_setzero_si256();
  bool any_new = false;
  bool new_edge = false;
  for (size_t i = 0; i < n; i += 32) {
    const __m256i tv = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(t + i));
    if (_mm256_testz_si256(tv, tv)) continue;
    const __m256i vv = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(v + i));
    const __m256i hit = _mm256_and_si256(tv, vv);
    if (_mm256_testz_si256(hit, hit)) continue;
    any_new = true;
    // New edge: a byte with new bits whose virgin byte is still untouched.
    const __m256i hit_nz = _mm256_xor_si256(_mm256_cmpeq_epi8(hit, zero), ones);
    const __m256i untouched = _mm256_cmpeq_epi8(vv, ones);
    if (!_mm256_testz_si256(hit_nz, untouched)) new_edge = true;
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(v + i),
                        _mm256_andnot_si256(tv, vv));
  }
  NewBits ret = new_edge ? NewBits::kNewEdge
                         : (any_new ? NewBits::kNewHitCount : NewBits::kNone);
  if (n != trace.size()) {
    NewBits tail = Scalar().update_virgin(trace.subspan(n), virgin.subspan(n));
    if (static_cast<int>(tail) > static_cast<int>(ret)) ret = tail;
  }
  return ret;
}

SF_AVX2 uint64_t CoverageHashAvx2(std::span<const uint8_t> map) {
  const size_t n = map.size() & ~size_t{31};
  const uint8_t* p = map.data();
  uint64_t h = kCoverageHashSeed;
  for (size_t i = 0; i < n; i += 32) {
    const __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(p + i));
    if (_mm256_testz_si256(v, v)) continue;
    const __m256i is_zero = _mm256_cmpeq_epi8(v, _mm256_setzero_si256());
    uint32_t mask = ~static_cast<uint32_t>(_mm256_movemask_epi8(is_zero));
    while (mask != 0) {
      const int bit = __builtin_ctz(mask);
      h = CoverageHashStep(h, i + bit, p[i + bit]);
      mask &= mask - 1;
    }
  }
  for (size_t i = n; i < map.size(); ++i) {
    if (p[i] != 0) h = CoverageHashStep(h, i, p[i]);
  }
  return h;
}

SF_AVX2 size_t CountNonZeroAvx2(std::span<const uint8_t> map) {
  const size_t n = map.size() & ~size_t{31};
  const uint8_t* p = map.data();
  size_t count = 0;
  for (size_t i = 0; i < n; i += 32) {
    const __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(p + i));
    const __m256i is_zero = _mm256_cmpeq_epi8(v, _mm256_setzero_si256());
    count += 32 - __builtin_popcount(static_cast<uint32_t>(_mm256_movemask_epi8(is_zero)));
  }
  for (size_t i = n; i < map.size(); ++i) count += p[i] != 0;
  return count;
}

SF_AVX2 uint32_t TlshBodyDistanceAvx2(const uint8_t* a, const uint8_t* b) {
  const __m256i va = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a));
  const __m256i vb = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(b));
  const __m256i three = _mm256_set1_epi8(3);
  // Score lookup for |x - y| in 0..3, replicated per 128-bit lane.
  const __m256i lut = _mm256_setr_epi8(0, 1, 2, 6, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0,
                                       0, 1, 2, 6, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0);
  __m256i acc = _mm256_setzero_si256();
  for (int k = 0; k < 4; ++k) {
    const __m128i shift = _mm_cvtsi32_si128(2 * k);
    const __m256i xa = _mm256_and_si256(_mm256_srl_epi16(va, shift), three);
    const __m256i xb = _mm256_and_si256(_mm256_srl_epi16(vb, shift), three);
    const __m256i d = _mm256_abs_epi8(_mm256_sub_epi8(xa, xb));
    acc = _mm256_add_epi8(acc, _mm256_shuffle_epi8(lut, d));
  }
  // acc bytes are at most 24; horizontal sum via SAD.
  const __m256i sums = _mm256_sad_epu8(acc, _mm256_setzero_si256());
  return static_cast<uint32_t>(_mm256_extract_epi64(sums, 0) + _mm256_extract_epi64(sums, 1) +
                               _mm256_extract_epi64(sums, 2) + _mm256_extract_epi64(sums, 3));
}

#undef SF_AVX2

}  // namespace

const KernelTable* Avx2() {
  static const KernelTable table{
      "avx2",           ClassifyCountsAvx2, UpdateVirginAvx2,
      CoverageHashAvx2, CountNonZeroAvx2,   TlshBodyDistanceAvx2,
  };
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? &table : nullptr;
}

#else

const KernelTable* Avx2() { return nullptr; }

#endif

}  // namespace statefuzz::kernels
