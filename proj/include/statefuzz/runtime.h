#pragma once

// Instrumentation runtime called by a target's hooks: allocation tracking,
// the request/reply iteration state machine, per-iteration snapshots of
// tracked memory and the post-execution state-sequence analysis.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "statefuzz/bytes.h"
#include "statefuzz/mvp_index.h"
#include "statefuzz/tlsh.h"

namespace statefuzz {

// Opaque memory-area identifier handed out by the target's allocator.
using AreaId = uint64_t;

enum class AreaKind : uint8_t { kHeap, kStack, kStatic };

enum class IterationPhase : uint8_t { kFresh, kReceiving, kSending };

struct AllocRecord {
  int64_t iter_no_init = 0;
  int64_t iter_no_end = -1;  // -1: never freed
  AreaId addr = 0;
  size_t size = 0;
  AreaKind kind = AreaKind::kHeap;
  uint64_t seq = 0;  // allocation order, used to order snapshot bytes
};

struct AllocDump {
  // Internal, 0-based: the first request/reply iteration dumps at 0.
  int64_t iter_no_dumped = 0;
  std::shared_ptr<const AllocRecord> record;
  Bytes contents;

  // 1-based label used in reports ("iteration 1" is the first exchange).
  int64_t reported_iteration() const { return iter_no_dumped + 1; }
};

using StateSequence = std::vector<StateId>;

// Maps per-iteration digests to state ids; missing digests map to
// kInitialState.
StateSequence MapDigestsToStates(std::span<const std::optional<TlshDigest>> digests,
                                 StateRegistry& registry, uint32_t epsilon);

// Reads the current contents of a tracked area.
using MemoryReader = std::function<ByteView(AreaId)>;

struct RuntimeOptions {
  // Stack areas are tracked only when strictly larger than this.
  size_t stack_track_threshold = 64;
  // Take snapshots at iteration boundaries. Off for throughput runs; the
  // state analysis then has nothing to work with.
  bool snapshots = true;
  // Also record allocations made after the first iteration. They are always
  // filtered out as short-lived; only useful to illustrate the filter.
  bool track_late_allocations = false;
};

class Runtime {
 public:
  explicit Runtime(RuntimeOptions options = {});

  // Resets everything; a second call starts a fresh, independent run.
  void OnProcessStart();
  // Returns true when the area is tracked. Tracked areas must be
  // zero-initialized by the caller.
  bool OnAllocate(AreaId addr, size_t size, AreaKind kind = AreaKind::kHeap);
  void OnFree(AreaId addr);
  void OnReceive();
  // Returns true when this send closed an iteration.
  bool OnSend(const MemoryReader& memory);
  void OnProcessEnd();

  // Per-iteration concatenation (allocation order) of the long-lived dumps;
  // nullopt for iterations without any. Requires OnProcessEnd().
  std::vector<std::optional<Bytes>> LongLivedSnapshots() const;
  // Per-iteration digests of the long-lived dumps, zero-padded to the TLSH
  // minimum length. nullopt where LongLivedSnapshots() is nullopt.
  std::vector<std::optional<TlshDigest>> IterationDigests() const;
  // Maps each iteration to a state id; iterations without long-lived data
  // map to kInitialState. The result is also kept as published_states().
  StateSequence SaveStateSeq(StateRegistry& registry, uint32_t epsilon);
  // OnProcessEnd() followed by SaveStateSeq().
  StateSequence OnProcessEnd(StateRegistry& registry, uint32_t epsilon);

  IterationPhase phase() const { return phase_; }
  int64_t current_iter_no() const { return current_iter_no_; }
  int64_t total_iterations() const { return total_iterations_; }
  bool ended() const { return ended_; }
  const std::map<AreaId, std::shared_ptr<AllocRecord>>& alloc_records() const {
    return live_by_addr_;
  }
  const std::vector<AllocDump>& alloc_dumps() const { return dumps_; }
  const StateSequence& published_states() const { return published_; }
  const RuntimeOptions& options() const { return options_; }

  // Long-lived filter: a dump counts iff its area was allocated in the first
  // iteration and lives until the end of the last one (or is never freed).
  static bool IsLongLived(const AllocRecord& r, int64_t total_iterations);

 private:
  void DumpCurrentState(const MemoryReader& memory);

  RuntimeOptions options_;
  IterationPhase phase_ = IterationPhase::kFresh;
  int64_t current_iter_no_ = 0;
  int64_t total_iterations_ = 0;
  bool ended_ = false;
  uint64_t next_seq_ = 0;
  std::map<AreaId, std::shared_ptr<AllocRecord>> live_by_addr_;
  std::map<uint64_t, std::shared_ptr<AllocRecord>> live_by_seq_;
  std::vector<AllocDump> dumps_;
  StateSequence published_;
};

}  // namespace statefuzz
