#include "statefuzz/mutation.h"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>
#include <set>
#include <stdexcept>

namespace statefuzz {
namespace {

// AFL bit order: bit 0 is the most significant bit of byte 0.
void FlipBit(Bytes& m, size_t bit) { m[bit >> 3] ^= static_cast<uint8_t>(128u >> (bit & 7)); }

void StoreLe(Bytes& m, size_t pos, uint32_t v, int width) {
  for (int i = 0; i < width; ++i) m[pos + i] = static_cast<uint8_t>(v >> (8 * i));
}
void StoreBe(Bytes& m, size_t pos, uint32_t v, int width) {
  for (int i = 0; i < width; ++i) m[pos + width - 1 - i] = static_cast<uint8_t>(v >> (8 * i));
}
uint32_t LoadLe(const Bytes& m, size_t pos, int width) {
  uint32_t v = 0;
  for (int i = 0; i < width; ++i) v |= static_cast<uint32_t>(m[pos + i]) << (8 * i);
  return v;
}
uint32_t LoadBe(const Bytes& m, size_t pos, int width) {
  uint32_t v = 0;
  for (int i = 0; i < width; ++i) v = (v << 8) | m[pos + i];
  return v;
}

std::vector<int32_t> InterestingValues(int width) {
  std::vector<int32_t> v(kInteresting8.begin(), kInteresting8.end());
  if (width >= 2) v.insert(v.end(), kInteresting16.begin(), kInteresting16.end());
  if (width >= 4) v.insert(v.end(), kInteresting32.begin(), kInteresting32.end());
  return v;
}

// Emits mutants of one stage with per-stage deduplication.
class StageEmitter {
 public:
  StageEmitter(const FuzzInput& parent, size_t idx, const MutantSink& sink)
      : parent_(parent), idx_(idx), sink_(sink) {}

  void Begin(DetStage stage) {
    stage_ = stage;
    seen_.clear();
  }
  // Returns false if the consumer asked to stop.
  bool Emit(Bytes&& message) {
    if (stopped_) return false;
    if (message == parent_.messages[idx_]) return true;
    if (!seen_.insert(message).second) return true;
    FuzzInput out;
    out.messages = parent_.messages;
    out.messages[idx_] = std::move(message);
    out.provenance = parent_.provenance;
    out.provenance.operators_applied = {std::string(StageName(stage_))};
    if (!sink_(stage_, std::move(out))) stopped_ = true;
    return !stopped_;
  }
  bool stopped() const { return stopped_; }

 private:
  const FuzzInput& parent_;
  size_t idx_;
  const MutantSink& sink_;
  DetStage stage_ = DetStage::kFlip1;
  std::set<Bytes> seen_;
  bool stopped_ = false;
};

void WalkingBitFlips(StageEmitter& e, const Bytes& m, DetStage stage, size_t width) {
  e.Begin(stage);
  const size_t bits = m.size() * 8;
  if (bits < width) return;
  for (size_t b = 0; b + width <= bits; ++b) {
    Bytes mut = m;
    for (size_t k = 0; k < width; ++k) FlipBit(mut, b + k);
    if (!e.Emit(std::move(mut))) return;
  }
}

void WalkingByteFlips(StageEmitter& e, const Bytes& m, DetStage stage, size_t width) {
  e.Begin(stage);
  if (m.size() < width) return;
  for (size_t i = 0; i + width <= m.size(); ++i) {
    Bytes mut = m;
    for (size_t k = 0; k < width; ++k) mut[i + k] ^= 0xFF;
    if (!e.Emit(std::move(mut))) return;
  }
}

void WalkingArith(StageEmitter& e, const Bytes& m, DetStage stage, int width) {
  e.Begin(stage);
  if (m.size() < static_cast<size_t>(width)) return;
  const uint32_t mask = width == 4 ? 0xFFFFFFFFu : ((1u << (8 * width)) - 1);
  for (size_t i = 0; i + width <= m.size(); ++i) {
    for (int j = 1; j <= kArithMax; ++j) {
      for (int sign : {1, -1}) {
        const uint32_t delta = static_cast<uint32_t>(sign * j);
        Bytes le = m;
        StoreLe(le, i, (LoadLe(m, i, width) + delta) & mask, width);
        if (!e.Emit(std::move(le))) return;
        if (width > 1) {
          Bytes be = m;
          StoreBe(be, i, (LoadBe(m, i, width) + delta) & mask, width);
          if (!e.Emit(std::move(be))) return;
        }
      }
    }
  }
}

void WalkingInteresting(StageEmitter& e, const Bytes& m, DetStage stage, int width) {
  e.Begin(stage);
  if (m.size() < static_cast<size_t>(width)) return;
  const auto values = InterestingValues(width);
  for (size_t i = 0; i + width <= m.size(); ++i) {
    for (int32_t v : values) {
      Bytes le = m;
      StoreLe(le, i, static_cast<uint32_t>(v), width);
      if (!e.Emit(std::move(le))) return;
      if (width > 1) {
        Bytes be = m;
        StoreBe(be, i, static_cast<uint32_t>(v), width);
        if (!e.Emit(std::move(be))) return;
      }
    }
  }
}

// Crossover inside the target message: head from the parent, tail from the
// donor's message at the same index (or its last message).
std::optional<Bytes> SpliceMessage(const Bytes& target, const Bytes& donor) {
  const size_t common = std::min(target.size(), donor.size());
  size_t first = common;
  size_t last = common;
  for (size_t i = 0; i < common; ++i) {
    if (target[i] != donor[i]) {
      if (first == common) first = i;
      last = i;
    }
  }
  size_t split = first;
  if (first != common && last > first + 1) split = first + (last - first) / 2;
  Bytes out(target.begin(), target.begin() + static_cast<std::ptrdiff_t>(split));
  if (split < donor.size()) out.insert(out.end(), donor.begin() + static_cast<std::ptrdiff_t>(split), donor.end());
  if (out == target) return std::nullopt;
  return out;
}

}  // namespace

std::string_view StageName(DetStage stage) {
  switch (stage) {
    case DetStage::kFlip1: return "flip1";
    case DetStage::kFlip2: return "flip2";
    case DetStage::kFlip4: return "flip4";
    case DetStage::kFlip8: return "flip8";
    case DetStage::kFlip16: return "flip16";
    case DetStage::kFlip32: return "flip32";
    case DetStage::kArith8: return "arith8";
    case DetStage::kArith16: return "arith16";
    case DetStage::kArith32: return "arith32";
    case DetStage::kInterest8: return "interest8";
    case DetStage::kInterest16: return "interest16";
    case DetStage::kInterest32: return "interest32";
    case DetStage::kDictOverwrite: return "dict_overwrite";
    case DetStage::kDictInsert: return "dict_insert";
    case DetStage::kSplice: return "splice";
  }
  return "?";
}

void DeterministicPass(const FuzzInput& input, size_t msg_idx, const Dictionary& dict,
                       std::span<const FuzzInput> splice_donors, const MutantSink& sink) {
  if (msg_idx >= input.messages.size()) return;
  const Bytes& m = input.messages[msg_idx];
  StageEmitter e(input, msg_idx, sink);

  WalkingBitFlips(e, m, DetStage::kFlip1, 1);
  WalkingBitFlips(e, m, DetStage::kFlip2, 2);
  WalkingBitFlips(e, m, DetStage::kFlip4, 4);
  WalkingByteFlips(e, m, DetStage::kFlip8, 1);
  WalkingByteFlips(e, m, DetStage::kFlip16, 2);
  WalkingByteFlips(e, m, DetStage::kFlip32, 4);
  WalkingArith(e, m, DetStage::kArith8, 1);
  WalkingArith(e, m, DetStage::kArith16, 2);
  WalkingArith(e, m, DetStage::kArith32, 4);
  WalkingInteresting(e, m, DetStage::kInterest8, 1);
  WalkingInteresting(e, m, DetStage::kInterest16, 2);
  WalkingInteresting(e, m, DetStage::kInterest32, 4);
  if (e.stopped()) return;

  e.Begin(DetStage::kDictOverwrite);
  for (const Bytes& tok : dict.tokens) {
    for (size_t i = 0; i + tok.size() <= m.size(); ++i) {
      Bytes mut = m;
      std::copy(tok.begin(), tok.end(), mut.begin() + static_cast<std::ptrdiff_t>(i));
      if (!e.Emit(std::move(mut))) return;
    }
  }
  e.Begin(DetStage::kDictInsert);
  for (const Bytes& tok : dict.tokens) {
    for (size_t i = 0; i <= m.size(); ++i) {
      if (m.size() + tok.size() > kMaxInputBytes) break;
      Bytes mut = m;
      mut.insert(mut.begin() + static_cast<std::ptrdiff_t>(i), tok.begin(), tok.end());
      if (!e.Emit(std::move(mut))) return;
    }
  }
  e.Begin(DetStage::kSplice);
  size_t donors = 0;
  for (const FuzzInput& donor : splice_donors) {
    if (donors == kMaxSpliceDonors) break;
    if (donor.messages.empty() || donor == input) continue;
    ++donors;
    const Bytes& dm = donor.messages[std::min(msg_idx, donor.messages.size() - 1)];
    if (auto spliced = SpliceMessage(m, dm)) {
      if (!e.Emit(std::move(*spliced))) return;
    }
  }
}

std::map<DetStage, size_t> CountDeterministic(const FuzzInput& input, size_t msg_idx,
                                              const Dictionary& dict,
                                              std::span<const FuzzInput> splice_donors) {
  std::map<DetStage, size_t> counts;
  DeterministicPass(input, msg_idx, dict, splice_donors, [&](DetStage s, FuzzInput&&) {
    ++counts[s];
    return true;
  });
  return counts;
}

// ---------------------------------------------------------------------------
// Stacked mutations

std::string_view HavocOpName(HavocOp op) {
  switch (op) {
    case HavocOp::kFlipBit: return "flip_bit";
    case HavocOp::kInterest8: return "interest8";
    case HavocOp::kInterest16: return "interest16";
    case HavocOp::kInterest32: return "interest32";
    case HavocOp::kSub8: return "sub8";
    case HavocOp::kSub16: return "sub16";
    case HavocOp::kSub32: return "sub32";
    case HavocOp::kAdd8: return "add8";
    case HavocOp::kAdd16: return "add16";
    case HavocOp::kAdd32: return "add32";
    case HavocOp::kRandomByte: return "random_byte";
    case HavocOp::kDeleteBytes: return "delete_bytes";
    case HavocOp::kCloneBytes: return "clone_bytes";
    case HavocOp::kInsertConstBlock: return "insert_const_block";
    case HavocOp::kOverwriteRandomChunk: return "overwrite_chunk";
    case HavocOp::kOverwriteFixedBytes: return "overwrite_fixed";
    case HavocOp::kDictOverwrite: return "dict_overwrite";
    case HavocOp::kDictInsert: return "dict_insert";
    case HavocOp::kReplaceMessage: return "replace_message";
    case HavocOp::kInsertMessageBefore: return "insert_message_before";
    case HavocOp::kInsertMessageAfter: return "insert_message_after";
    case HavocOp::kDuplicateMessage: return "duplicate_message";
  }
  return "?";
}

bool IsMessageLevel(HavocOp op) {
  return op == HavocOp::kReplaceMessage || op == HavocOp::kInsertMessageBefore ||
         op == HavocOp::kInsertMessageAfter || op == HavocOp::kDuplicateMessage;
}

namespace {

// AFL-style block length: mostly small, occasionally large. Result in [1, limit].
size_t ChooseBlockLen(Rng& rng, size_t limit) {
  size_t lo, hi;
  switch (RandBelow(rng, 3)) {
    case 0: lo = 1; hi = 32; break;
    case 1: lo = 32; hi = 128; break;
    default:
      if (RandBelow(rng, 10) != 0) { lo = 128; hi = 1500; }
      else { lo = 1500; hi = 32768; }
  }
  if (lo >= limit) lo = 1;
  hi = std::min(hi, limit);
  return lo + RandBelow(rng, hi - lo + 1);
}

const Bytes* RandomCorpusMessage(HavocContext& ctx) {
  if (ctx.corpus.empty()) return nullptr;
  const FuzzInput& donor = ctx.corpus[RandBelow(ctx.rng, ctx.corpus.size())];
  if (donor.messages.empty()) return nullptr;
  return &donor.messages[RandBelow(ctx.rng, donor.messages.size())];
}

bool ArithOp(Bytes& m, Rng& rng, int width, bool add) {
  if (m.size() < static_cast<size_t>(width)) return false;
  const size_t pos = RandBelow(rng, m.size() - width + 1);
  const uint32_t delta = 1 + static_cast<uint32_t>(RandBelow(rng, kArithMax));
  const uint32_t mask = width == 4 ? 0xFFFFFFFFu : ((1u << (8 * width)) - 1);
  if (width == 1 || RandBelow(rng, 2) == 0) {
    const uint32_t v = LoadLe(m, pos, width);
    StoreLe(m, pos, (add ? v + delta : v - delta) & mask, width);
  } else {
    const uint32_t v = LoadBe(m, pos, width);
    StoreBe(m, pos, (add ? v + delta : v - delta) & mask, width);
  }
  return true;
}

bool InterestOp(Bytes& m, Rng& rng, int width) {
  if (m.size() < static_cast<size_t>(width)) return false;
  const auto values = InterestingValues(width);
  const size_t pos = RandBelow(rng, m.size() - width + 1);
  const auto v = static_cast<uint32_t>(values[RandBelow(rng, values.size())]);
  if (width == 1 || RandBelow(rng, 2) == 0) StoreLe(m, pos, v, width);
  else StoreBe(m, pos, v, width);
  return true;
}

}  // namespace

bool ApplyHavocOp(HavocOp op, HavocContext& ctx) {
  auto& msgs = ctx.input.messages;
  Rng& rng = ctx.rng;
  if (!IsMessageLevel(op) && ctx.msg_idx >= msgs.size()) return false;

  switch (op) {
    case HavocOp::kReplaceMessage: {
      const Bytes* src = RandomCorpusMessage(ctx);
      if (src == nullptr) return false;
      if (ctx.msg_idx >= msgs.size()) msgs.push_back(*src);
      else msgs[ctx.msg_idx] = *src;
      return true;
    }
    case HavocOp::kInsertMessageBefore: {
      const Bytes* src = RandomCorpusMessage(ctx);
      if (src == nullptr) return false;
      const size_t at = std::min(ctx.msg_idx, msgs.size());
      msgs.insert(msgs.begin() + static_cast<std::ptrdiff_t>(at), *src);
      if (ctx.msg_idx < msgs.size() - 1) ++ctx.msg_idx;
      return true;
    }
    case HavocOp::kInsertMessageAfter: {
      const Bytes* src = RandomCorpusMessage(ctx);
      if (src == nullptr) return false;
      const size_t at = std::min(ctx.msg_idx + 1, msgs.size());
      msgs.insert(msgs.begin() + static_cast<std::ptrdiff_t>(at), *src);
      return true;
    }
    case HavocOp::kDuplicateMessage: {
      if (msgs.empty()) return false;
      const size_t at = std::min(ctx.msg_idx, msgs.size() - 1);
      Bytes copy = msgs[at];
      msgs.insert(msgs.begin() + static_cast<std::ptrdiff_t>(at) + 1, std::move(copy));
      return true;
    }
    default:
      break;
  }

  Bytes& m = msgs[ctx.msg_idx];
  switch (op) {
    case HavocOp::kFlipBit:
      if (m.empty()) return false;
      FlipBit(m, RandBelow(rng, m.size() * 8));
      return true;
    case HavocOp::kInterest8: return InterestOp(m, rng, 1);
    case HavocOp::kInterest16: return InterestOp(m, rng, 2);
    case HavocOp::kInterest32: return InterestOp(m, rng, 4);
    case HavocOp::kSub8: return ArithOp(m, rng, 1, false);
    case HavocOp::kSub16: return ArithOp(m, rng, 2, false);
    case HavocOp::kSub32: return ArithOp(m, rng, 4, false);
    case HavocOp::kAdd8: return ArithOp(m, rng, 1, true);
    case HavocOp::kAdd16: return ArithOp(m, rng, 2, true);
    case HavocOp::kAdd32: return ArithOp(m, rng, 4, true);
    case HavocOp::kRandomByte: {
      if (m.empty()) return false;
      // XOR with 1..255 so the byte always changes.
      m[RandBelow(rng, m.size())] ^= static_cast<uint8_t>(1 + RandBelow(rng, 255));
      return true;
    }
    case HavocOp::kDeleteBytes: {
      if (m.size() < 2) return false;
      const size_t len = ChooseBlockLen(rng, m.size() - 1);
      const size_t from = RandBelow(rng, m.size() - len + 1);
      m.erase(m.begin() + static_cast<std::ptrdiff_t>(from),
              m.begin() + static_cast<std::ptrdiff_t>(from + len));
      return true;
    }
    case HavocOp::kCloneBytes: {
      if (m.empty()) return false;
      const size_t len = ChooseBlockLen(rng, m.size());
      const size_t from = RandBelow(rng, m.size() - len + 1);
      const size_t to = RandBelow(rng, m.size() + 1);
      Bytes block(m.begin() + static_cast<std::ptrdiff_t>(from),
                  m.begin() + static_cast<std::ptrdiff_t>(from + len));
      m.insert(m.begin() + static_cast<std::ptrdiff_t>(to), block.begin(), block.end());
      return true;
    }
    case HavocOp::kInsertConstBlock: {
      const size_t len = ChooseBlockLen(rng, 128);
      const size_t to = RandBelow(rng, m.size() + 1);
      const uint8_t value = RandBelow(rng, 2) == 0 || m.empty()
                                ? static_cast<uint8_t>(RandBelow(rng, 256))
                                : m[RandBelow(rng, m.size())];
      m.insert(m.begin() + static_cast<std::ptrdiff_t>(to), len, value);
      return true;
    }
    case HavocOp::kOverwriteRandomChunk: {
      if (m.size() < 2) return false;
      const size_t len = ChooseBlockLen(rng, m.size() - 1);
      const size_t from = RandBelow(rng, m.size() - len + 1);
      const size_t to = RandBelow(rng, m.size() - len + 1);
      if (from == to) return false;
      Bytes block(m.begin() + static_cast<std::ptrdiff_t>(from),
                  m.begin() + static_cast<std::ptrdiff_t>(from + len));
      std::copy(block.begin(), block.end(), m.begin() + static_cast<std::ptrdiff_t>(to));
      return true;
    }
    case HavocOp::kOverwriteFixedBytes: {
      if (m.empty()) return false;
      const size_t len = ChooseBlockLen(rng, m.size());
      const size_t to = RandBelow(rng, m.size() - len + 1);
      const uint8_t value = RandBelow(rng, 2) == 0 ? static_cast<uint8_t>(RandBelow(rng, 256))
                                                   : m[RandBelow(rng, m.size())];
      std::fill_n(m.begin() + static_cast<std::ptrdiff_t>(to), len, value);
      return true;
    }
    case HavocOp::kDictOverwrite: {
      if (ctx.dict.tokens.empty()) return false;
      const Bytes& tok = ctx.dict.tokens[RandBelow(rng, ctx.dict.tokens.size())];
      if (tok.size() > m.size()) return false;
      const size_t to = RandBelow(rng, m.size() - tok.size() + 1);
      std::copy(tok.begin(), tok.end(), m.begin() + static_cast<std::ptrdiff_t>(to));
      return true;
    }
    case HavocOp::kDictInsert: {
      if (ctx.dict.tokens.empty()) return false;
      const Bytes& tok = ctx.dict.tokens[RandBelow(rng, ctx.dict.tokens.size())];
      const size_t to = RandBelow(rng, m.size() + 1);
      m.insert(m.begin() + static_cast<std::ptrdiff_t>(to), tok.begin(), tok.end());
      return true;
    }
    default:
      return false;
  }
}

FuzzInput StackedMutation(const FuzzInput& input, size_t msg_idx,
                          std::span<const FuzzInput> corpus, const Dictionary& dict, Rng& rng,
                          const MutationConfig& cfg) {
  static constexpr HavocOp kByteOps[] = {
      HavocOp::kFlipBit,        HavocOp::kInterest8,   HavocOp::kInterest16,
      HavocOp::kInterest32,     HavocOp::kSub8,        HavocOp::kSub16,
      HavocOp::kSub32,          HavocOp::kAdd8,        HavocOp::kAdd16,
      HavocOp::kAdd32,          HavocOp::kRandomByte,  HavocOp::kDeleteBytes,
      HavocOp::kCloneBytes,     HavocOp::kInsertConstBlock, HavocOp::kOverwriteRandomChunk,
      HavocOp::kOverwriteFixedBytes,
  };
  static constexpr HavocOp kMessageOps[] = {
      HavocOp::kReplaceMessage, HavocOp::kInsertMessageBefore, HavocOp::kInsertMessageAfter,
      HavocOp::kDuplicateMessage,
  };

  std::vector<std::pair<HavocOp, double>> pool;
  for (HavocOp op : kByteOps) pool.emplace_back(op, 1.0);
  if (!dict.tokens.empty()) {
    pool.emplace_back(HavocOp::kDictOverwrite, 1.0);
    pool.emplace_back(HavocOp::kDictInsert, 1.0);
  }
  for (HavocOp op : kMessageOps) pool.emplace_back(op, cfg.message_op_weight);
  double total = 0.0;
  for (const auto& [op, w] : pool) total += w;

  FuzzInput out = input;
  out.provenance.operators_applied.clear();
  if (out.messages.empty()) out.messages.emplace_back();
  size_t idx = std::min(msg_idx, out.messages.size());
  if (idx == out.messages.size()) {
    // Targeting the end of the session: give the mutators a message to work on.
    HavocContext ctx{out, idx, corpus, dict, rng};
    if (!ApplyHavocOp(HavocOp::kReplaceMessage, ctx)) out.messages.emplace_back();
    out.provenance.operators_applied.emplace_back("append_message");
  }

  const int pow = 1 + static_cast<int>(RandBelow(rng, static_cast<uint64_t>(cfg.max_stack_pow)));
  const int stack = 1 << pow;
  for (int i = 0; i < stack; ++i) {
    double r = RandUnit(rng) * total;
    HavocOp op = pool.back().first;
    for (const auto& [candidate, w] : pool) {
      r -= w;
      if (r < 0.0) {
        op = candidate;
        break;
      }
    }
    FuzzInput backup = out;
    size_t backup_idx = idx;
    HavocContext ctx{out, idx, corpus, dict, rng};
    if (!ApplyHavocOp(op, ctx)) continue;
    if (out.total_bytes() > kMaxInputBytes) {
      out = std::move(backup);
      idx = backup_idx;
      continue;
    }
    out.provenance.operators_applied.emplace_back(HavocOpName(op));
  }
  out.provenance.parent_id = input.provenance.parent_id;
  out.provenance.state_targeted = input.provenance.state_targeted;
  return out;
}

// ---------------------------------------------------------------------------
// Trimming

FuzzInput TrimInput(const FuzzInput& input, const ExecutionPredicate& oracle, size_t max_execs) {
  size_t execs = 0;
  auto check = [&](const FuzzInput& candidate) {
    ++execs;
    return oracle(candidate);
  };
  if (!check(input)) return input;

  FuzzInput cur = input;
  for (size_t i = cur.messages.size(); i-- > 0;) {
    if (cur.messages.size() <= 1 || execs >= max_execs) break;
    FuzzInput candidate = cur;
    candidate.messages.erase(candidate.messages.begin() + static_cast<std::ptrdiff_t>(i));
    if (check(candidate)) cur = std::move(candidate);
  }

  for (size_t mi = 0; mi < cur.messages.size(); ++mi) {
    const size_t len = cur.messages[mi].size();
    if (len == 0) continue;
    const size_t p2 = std::bit_ceil(len);
    size_t remove_len = std::max<size_t>(1, p2 / 16);
    const size_t min_len = std::max<size_t>(1, p2 / 1024);
    while (remove_len >= min_len && execs < max_execs) {
      size_t pos = 0;
      while (pos < cur.messages[mi].size() && execs < max_execs) {
        FuzzInput candidate = cur;
        Bytes& m = candidate.messages[mi];
        const size_t n = std::min(remove_len, m.size() - pos);
        m.erase(m.begin() + static_cast<std::ptrdiff_t>(pos),
                m.begin() + static_cast<std::ptrdiff_t>(pos + n));
        if (check(candidate)) cur = std::move(candidate);
        else pos += remove_len;
      }
      if (remove_len == 1) break;
      remove_len /= 2;
    }
  }
  cur.provenance = input.provenance;
  return cur;
}

// ---------------------------------------------------------------------------
// Dictionary

namespace {

std::optional<Bytes> Unescape(std::string_view s) {
  Bytes out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out.push_back(static_cast<uint8_t>(s[i]));
      continue;
    }
    if (++i >= s.size()) return std::nullopt;
    switch (s[i]) {
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      case 't': out.push_back('\t'); break;
      case '0': out.push_back('\0'); break;
      case '\\': out.push_back('\\'); break;
      case '"': out.push_back('"'); break;
      case 'x': {
        if (i + 2 >= s.size() + 0 && i + 2 > s.size()) return std::nullopt;
        auto hex = HexDecode(s.substr(i + 1, 2));
        if (!hex) return std::nullopt;
        out.push_back((*hex)[0]);
        i += 2;
        break;
      }
      default: return std::nullopt;
    }
  }
  return out;
}

}  // namespace

Dictionary Dictionary::Parse(std::string_view text) {
  Dictionary d;
  size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) {
      line.remove_suffix(1);
    }
    while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);
    if (line.empty() || line.front() == '#') continue;
    if (line.size() >= 2 && line.front() == '"' && line.back() == '"') {
      line = line.substr(1, line.size() - 2);
    }
    auto tok = Unescape(line);
    if (!tok) throw std::runtime_error("bad escape in dictionary line " + std::to_string(line_no));
    if (!tok->empty()) d.tokens.push_back(std::move(*tok));
  }
  return d;
}

Dictionary Dictionary::Load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dictionary " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return Parse(text);
}

}  // namespace statefuzz
