#pragma once

// Locality-sensitive hashing of byte streams (TLSH-style: 128 buckets,
// 1-byte checksum, 32-byte body, 5-byte sliding window).
//
// Digests are a pure function of the ingested byte sequence, regardless of how
// it is split across Update() calls. Distance is symmetric and zero on
// identical valid digests; it is not a metric (no triangle inequality).

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "statefuzz/bytes.h"

namespace statefuzz {

inline constexpr size_t kTlshBuckets = 128;
inline constexpr size_t kTlshBodyBytes = 32;
inline constexpr size_t kTlshMinInputLen = 50;
inline constexpr uint32_t kTlshMaxDistance = 1u << 30;

// The fixed 256-entry permutation behind the window hash.
extern const std::array<uint8_t, 256> kTlshPermutation;

// Pearson-style hash of one salted trigram.
inline uint8_t TlshMix(uint8_t salt, uint8_t i, uint8_t j, uint8_t k) {
  uint8_t h = kTlshPermutation[salt];
  h = kTlshPermutation[h ^ i];
  h = kTlshPermutation[h ^ j];
  return kTlshPermutation[h ^ k];
}

// Logarithmic length bucket, the digest's l_value.
uint8_t TlshLengthCode(uint64_t len);

struct TlshDigest {
  uint8_t checksum = 0;
  uint8_t l_value = 0;
  uint8_t q_ratios = 0;  // (q1 ratio << 4) | q2 ratio
  std::array<uint8_t, kTlshBodyBytes> body{};  // bucket 4i+j in bits 2j..2j+1 of body[i]
  bool valid = false;

  uint8_t q1_ratio() const { return q_ratios >> 4; }
  uint8_t q2_ratio() const { return q_ratios & 0x0F; }
  // Two-bit quartile code of one bucket.
  uint8_t Code(size_t bucket) const { return (body[bucket / 4] >> (2 * (bucket % 4))) & 3; }

  // 70 hex chars (checksum, l_value, q_ratios, body); "INVALID" otherwise.
  std::string ToHex() const;
  static std::optional<TlshDigest> FromHex(std::string_view hex);

  friend bool operator==(const TlshDigest&, const TlshDigest&) = default;
};

class TlshStream {
 public:
  TlshStream() = default;

  void Update(ByteView data);
  // Does not consume the stream; calling it twice gives the same digest.
  TlshDigest Finalize() const;
  void Reset() { *this = TlshStream(); }

  uint64_t total_len() const { return total_len_; }
  const std::array<uint32_t, kTlshBuckets>& bucket_counts() const { return buckets_; }
  uint8_t checksum() const { return checksum_; }

 private:
  std::array<uint32_t, kTlshBuckets> buckets_{};
  uint8_t checksum_ = 0;
  uint64_t total_len_ = 0;
  // window_[0] is the most recent byte.
  std::array<uint8_t, 4> window_{};
};

// Split distance: the header part (length, quartile ratios, checksum) and
// the body part (per-bucket code differences).
struct TlshDistanceParts {
  uint32_t header = 0;
  uint32_t body = 0;
  uint32_t total() const { return header + body; }
};

TlshDistanceParts TlshDistanceSplit(const TlshDigest& a, const TlshDigest& b);
// kTlshMaxDistance if either digest is invalid.
uint32_t TlshDistance(const TlshDigest& a, const TlshDigest& b);

// One-shot convenience.
TlshDigest TlshHash(ByteView data);

}  // namespace statefuzz
