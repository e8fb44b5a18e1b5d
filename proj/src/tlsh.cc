#include "statefuzz/tlsh.h"

#include <algorithm>
#include <cmath>

#include "statefuzz/kernels.h"

namespace statefuzz {

// Descending Fisher-Yates shuffle of 0..255 driven by splitmix64 seeded with
// 0x5354415445464c53 (j = r % (i + 1) for i = 255..1).
const std::array<uint8_t, 256> kTlshPermutation = {
     17, 199, 236, 225,  94,  26, 142, 221,  35,  29,  89, 202,  55, 251, 114, 157,
    187,  66, 183,  81, 229, 206, 189, 109, 140,  70,  67, 143,  32, 151,   3,  63,
     16, 119,  53,  65, 203, 247, 161, 146, 232, 230,  83,  64,  50,  86, 116,  30,
    219,  34,  45, 240,  28, 102, 209, 120,   2, 216,  77, 136, 117,  21,  25, 123,
    132, 128, 138, 184,  82, 110, 145,   9, 192, 139,  24, 148,  22, 243, 211, 106,
    218, 201, 242, 165, 173, 248, 105,  11, 197, 130, 217,  36,  69,   1, 133,  37,
    156, 101,  76, 107,  54,  38,  56, 233, 131, 167,  52, 228, 194, 195, 253,   5,
    214,  91, 191, 227,   6, 255, 210,  20, 180,  90, 215, 237,  31,  84,  15,  47,
    178, 134,  51,  73, 125, 127, 249,  85, 100,  12, 164, 252,  61, 150,   7,  97,
    190, 103, 152,  44, 144, 155,  59, 129, 122,   0,  99, 141,  60,  58,  62, 175,
    176, 154,  41, 182,  79,  68, 220,   4, 212,  92, 234, 231, 149, 222, 172, 181,
     74,  43, 135, 169, 158, 241,  49, 160, 112,  39, 118,  93, 162,  78, 208, 238,
    200,  96,  13, 213, 171, 179, 226, 186,  27,  46, 204, 198,  98,  72, 235, 159,
    168,  88,  23, 113, 104, 223,  40,  18, 153, 254, 196, 126,  80,  14, 121, 244,
    174, 245,  57, 185,  95,   8, 207, 250,  48,  19, 124, 224, 163, 239,  75, 193,
     71, 188,  42,  87, 205, 170,  33, 177,  10, 111, 166, 108, 115, 147, 246, 137,
};

uint8_t TlshLengthCode(uint64_t len) {
  if (len == 0) return 0;
  const double l = static_cast<double>(len);
  double v;
  if (len <= 656) {
    v = std::log(l) / std::log(1.5);
  } else if (len <= 3199) {
    v = std::log(l) / std::log(1.3) - 8.72777;
  } else {
    v = std::log(l) / std::log(1.1) - 62.5472;
  }
  return static_cast<uint8_t>(static_cast<int64_t>(std::floor(v)) & 0xFF);
}

void TlshStream::Update(ByteView data) {
  for (uint8_t byte : data) {
    if (total_len_ >= 4) {
      const uint8_t j = byte;
      const uint8_t j1 = window_[0], j2 = window_[1], j3 = window_[2], j4 = window_[3];
      checksum_ = TlshMix(0, j, j1, checksum_);
      ++buckets_[TlshMix(2, j, j1, j2) & 0x7F];
      ++buckets_[TlshMix(3, j, j1, j3) & 0x7F];
      ++buckets_[TlshMix(5, j, j2, j3) & 0x7F];
      ++buckets_[TlshMix(7, j, j2, j4) & 0x7F];
      ++buckets_[TlshMix(11, j, j1, j4) & 0x7F];
      ++buckets_[TlshMix(13, j, j3, j4) & 0x7F];
    }
    window_[3] = window_[2];
    window_[2] = window_[1];
    window_[1] = window_[0];
    window_[0] = byte;
    ++total_len_;
  }
}

TlshDigest TlshStream::Finalize() const {
  TlshDigest d;
  if (total_len_ < kTlshMinInputLen) return d;

  std::array<uint32_t, kTlshBuckets> sorted = buckets_;
  auto nth = [&sorted](size_t k) {
    std::nth_element(sorted.begin(), sorted.begin() + k, sorted.end());
    return sorted[k];
  };
  const uint32_t q3 = nth(kTlshBuckets * 3 / 4 - 1);
  const uint32_t q2 = nth(kTlshBuckets / 2 - 1);
  const uint32_t q1 = nth(kTlshBuckets / 4 - 1);

  for (size_t i = 0; i < kTlshBodyBytes; ++i) {
    uint8_t packed = 0;
    for (size_t j = 0; j < 4; ++j) {
      const uint32_t k = buckets_[4 * i + j];
      uint8_t code = 0;
      if (k > q3) code = 3;
      else if (k > q2) code = 2;
      else if (k > q1) code = 1;
      packed |= static_cast<uint8_t>(code << (2 * j));
    }
    d.body[i] = packed;
  }
  d.checksum = checksum_;
  d.l_value = TlshLengthCode(total_len_);
  // Sparse inputs (memory snapshots) can leave three quarters of the buckets
  // empty; the ratios are then defined as zero.
  if (q3 != 0) {
    const uint8_t q1r = static_cast<uint8_t>((uint64_t{q1} * 100 / q3) % 16);
    const uint8_t q2r = static_cast<uint8_t>((uint64_t{q2} * 100 / q3) % 16);
    d.q_ratios = static_cast<uint8_t>((q1r << 4) | q2r);
  }
  d.valid = true;
  return d;
}

namespace {

uint32_t ModDiff(uint32_t x, uint32_t y, uint32_t range) {
  const uint32_t dl = x > y ? x - y : y - x;
  return std::min(dl, range - dl);
}

}  // namespace

TlshDistanceParts TlshDistanceSplit(const TlshDigest& a, const TlshDigest& b) {
  TlshDistanceParts parts;
  const uint32_t ldiff = ModDiff(a.l_value, b.l_value, 256);
  parts.header += ldiff <= 1 ? ldiff : ldiff * 12;
  for (auto [x, y] : {std::pair{a.q1_ratio(), b.q1_ratio()}, std::pair{a.q2_ratio(), b.q2_ratio()}}) {
    const uint32_t qdiff = ModDiff(x, y, 16);
    parts.header += qdiff <= 1 ? qdiff : (qdiff - 1) * 12;
  }
  if (a.checksum != b.checksum) parts.header += 1;
  parts.body = kernels::Active().tlsh_body_distance(a.body.data(), b.body.data());
  return parts;
}

uint32_t TlshDistance(const TlshDigest& a, const TlshDigest& b) {
  if (!a.valid || !b.valid) return kTlshMaxDistance;
  return TlshDistanceSplit(a, b).total();
}

TlshDigest TlshHash(ByteView data) {
  TlshStream s;
  s.Update(data);
  return s.Finalize();
}

std::string TlshDigest::ToHex() const {
  if (!valid) return "INVALID";
  Bytes raw;
  raw.reserve(3 + kTlshBodyBytes);
  raw.push_back(checksum);
  raw.push_back(l_value);
  raw.push_back(q_ratios);
  raw.insert(raw.end(), body.begin(), body.end());
  return HexEncode(raw);
}

std::optional<TlshDigest> TlshDigest::FromHex(std::string_view hex) {
  if (hex == "INVALID") return TlshDigest{};
  auto raw = HexDecode(hex);
  if (!raw || raw->size() != 3 + kTlshBodyBytes) return std::nullopt;
  TlshDigest d;
  d.checksum = (*raw)[0];
  d.l_value = (*raw)[1];
  d.q_ratios = (*raw)[2];
  std::copy(raw->begin() + 3, raw->end(), d.body.begin());
  d.valid = true;
  return d;
}

}  // namespace statefuzz
