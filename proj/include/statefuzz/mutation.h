#pragma once

// Input generation: byte-level deterministic stages and stacked (havoc)
// operators applied to one targeted message, plus message-level operators
// that replace, insert or duplicate whole messages. Also input trimming.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "statefuzz/input.h"
#include "statefuzz/rng.h"

namespace statefuzz {

inline constexpr int kArithMax = 35;
inline constexpr size_t kMaxSpliceDonors = 8;

// Boundary constants, cumulative: the 16-bit stage also uses the 8-bit ones,
// the 32-bit stage uses all three.
inline constexpr std::array<int8_t, 9> kInteresting8 = {-128, -1, 0, 1, 16, 32, 64, 100, 127};
inline constexpr std::array<int16_t, 10> kInteresting16 = {-32768, -129, 128,  255,  256,
                                                           512,    1000, 1024, 4096, 32767};
inline constexpr std::array<int32_t, 8> kInteresting32 = {
    INT32_MIN, -100663046, -32769, 32768, 65535, 65536, 100663045, INT32_MAX};

struct Dictionary {
  std::vector<Bytes> tokens;

  // One token per line; `#` starts a comment line; blank lines are skipped.
  // Tokens may be wrapped in double quotes and use C escapes (\n, \r, \t,
  // \\, \", \xHH).
  static Dictionary Parse(std::string_view text);
  static Dictionary Load(const std::filesystem::path& path);
};

enum class DetStage : uint8_t {
  kFlip1, kFlip2, kFlip4, kFlip8, kFlip16, kFlip32,
  kArith8, kArith16, kArith32,
  kInterest8, kInterest16, kInterest32,
  kDictOverwrite, kDictInsert,
  kSplice,
};
std::string_view StageName(DetStage stage);

// Receives each mutant; return false to stop the pass early.
using MutantSink = std::function<bool(DetStage, FuzzInput&&)>;

// Walks every deterministic stage over message `msg_idx`, in fixed order.
// Within a stage no mutant repeats and none equals the parent. Other
// messages are left untouched. Skipped entirely when msg_idx is past the end.
void DeterministicPass(const FuzzInput& input, size_t msg_idx, const Dictionary& dict,
                       std::span<const FuzzInput> splice_donors, const MutantSink& sink);

std::map<DetStage, size_t> CountDeterministic(const FuzzInput& input, size_t msg_idx,
                                              const Dictionary& dict,
                                              std::span<const FuzzInput> splice_donors);

enum class HavocOp : uint8_t {
  kFlipBit,
  kInterest8, kInterest16, kInterest32,
  kSub8, kSub16, kSub32,
  kAdd8, kAdd16, kAdd32,
  kRandomByte,
  kDeleteBytes,
  kCloneBytes,
  kInsertConstBlock,
  kOverwriteRandomChunk,
  kOverwriteFixedBytes,
  kDictOverwrite,  // only drawn with a non-empty dictionary
  kDictInsert,     // only drawn with a non-empty dictionary
  kReplaceMessage,
  kInsertMessageBefore,
  kInsertMessageAfter,
  kDuplicateMessage,
};
std::string_view HavocOpName(HavocOp op);
bool IsMessageLevel(HavocOp op);

struct MutationConfig {
  // Draw weight of each message-level operator; byte-level operators weigh 1.
  double message_op_weight = 1.0;
  // Stack depth is 2^k with k uniform in [1, max_stack_pow].
  int max_stack_pow = 7;
};

// Shared state of one stacked mutation.
struct HavocContext {
  FuzzInput& input;
  size_t& msg_idx;  // follows the targeted message through insertions
  std::span<const FuzzInput> corpus;
  const Dictionary& dict;
  Rng& rng;
};

// Applies a single operator. Returns false when it had nothing to act on.
bool ApplyHavocOp(HavocOp op, HavocContext& ctx);

FuzzInput StackedMutation(const FuzzInput& input, size_t msg_idx,
                          std::span<const FuzzInput> corpus, const Dictionary& dict, Rng& rng,
                          const MutationConfig& cfg = {});

// Returns true when the candidate behaves like the original.
using ExecutionPredicate = std::function<bool(const FuzzInput&)>;

// Drops whole messages first, then byte blocks inside messages, keeping
// every step for which `oracle` still holds. If the oracle rejects the
// original input the trim is aborted and the input returned unchanged.
FuzzInput TrimInput(const FuzzInput& input, const ExecutionPredicate& oracle,
                    size_t max_execs = 4096);

}  // namespace statefuzz
