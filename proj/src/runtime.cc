#include "statefuzz/runtime.h"

#include <spdlog/spdlog.h>

namespace statefuzz {

Runtime::Runtime(RuntimeOptions options) : options_(options) {}

void Runtime::OnProcessStart() {
  phase_ = IterationPhase::kFresh;
  current_iter_no_ = 0;
  total_iterations_ = 0;
  ended_ = false;
  next_seq_ = 0;
  live_by_addr_.clear();
  live_by_seq_.clear();
  dumps_.clear();
  published_.clear();
}

bool Runtime::OnAllocate(AreaId addr, size_t size, AreaKind kind) {
  const bool first_iteration = current_iter_no_ == 0 || kind == AreaKind::kStatic;
  if (!first_iteration && !options_.track_late_allocations) return false;
  if (kind == AreaKind::kStack && size <= options_.stack_track_threshold) return false;

  if (auto it = live_by_addr_.find(addr); it != live_by_addr_.end()) {
    spdlog::debug("runtime: area {} allocated twice; replacing its record", addr);
    live_by_seq_.erase(it->second->seq);
    live_by_addr_.erase(it);
  }
  auto rec = std::make_shared<AllocRecord>();
  rec->iter_no_init = kind == AreaKind::kStatic ? 0 : current_iter_no_;
  rec->iter_no_end = -1;
  rec->addr = addr;
  rec->size = size;
  rec->kind = kind;
  rec->seq = next_seq_++;
  live_by_addr_.emplace(addr, rec);
  live_by_seq_.emplace(rec->seq, std::move(rec));
  return true;
}

void Runtime::OnFree(AreaId addr) {
  auto it = live_by_addr_.find(addr);
  if (it == live_by_addr_.end()) {
    spdlog::trace("runtime: free of untracked area {}", addr);
    return;
  }
  it->second->iter_no_end = current_iter_no_;
  live_by_seq_.erase(it->second->seq);
  live_by_addr_.erase(it);
}

void Runtime::OnReceive() {
  if (phase_ != IterationPhase::kReceiving) phase_ = IterationPhase::kReceiving;
}

bool Runtime::OnSend(const MemoryReader& memory) {
  if (phase_ != IterationPhase::kReceiving) return false;
  phase_ = IterationPhase::kSending;
  if (options_.snapshots) DumpCurrentState(memory);
  ++current_iter_no_;
  return true;
}

void Runtime::DumpCurrentState(const MemoryReader& memory) {
  for (const auto& [seq, rec] : live_by_seq_) {
    ByteView contents = memory(rec->addr);
    AllocDump d;
    d.iter_no_dumped = current_iter_no_;
    d.record = rec;
    d.contents.assign(contents.begin(), contents.end());
    dumps_.push_back(std::move(d));
  }
}

void Runtime::OnProcessEnd() {
  total_iterations_ = current_iter_no_;
  ended_ = true;
}

bool Runtime::IsLongLived(const AllocRecord& r, int64_t total_iterations) {
  if (r.iter_no_init > 0) return false;
  if (r.iter_no_end != -1 && r.iter_no_end < total_iterations) return false;
  return true;
}

std::vector<std::optional<Bytes>> Runtime::LongLivedSnapshots() const {
  std::vector<std::optional<Bytes>> out(static_cast<size_t>(total_iterations_));
  for (const AllocDump& d : dumps_) {
    if (!IsLongLived(*d.record, total_iterations_)) continue;
    if (d.iter_no_dumped < 0 || d.iter_no_dumped >= total_iterations_) continue;
    auto& slot = out[static_cast<size_t>(d.iter_no_dumped)];
    if (!slot) slot.emplace();
    slot->insert(slot->end(), d.contents.begin(), d.contents.end());
  }
  return out;
}

std::vector<std::optional<TlshDigest>> Runtime::IterationDigests() const {
  std::vector<std::optional<TlshStream>> streams(static_cast<size_t>(total_iterations_));
  for (const AllocDump& d : dumps_) {
    if (!IsLongLived(*d.record, total_iterations_)) continue;
    if (d.iter_no_dumped < 0 || d.iter_no_dumped >= total_iterations_) continue;
    auto& s = streams[static_cast<size_t>(d.iter_no_dumped)];
    if (!s) s.emplace();
    s->Update(d.contents);
  }
  std::vector<std::optional<TlshDigest>> out(streams.size());
  static const Bytes kPadding(kTlshMinInputLen, 0);
  for (size_t i = 0; i < streams.size(); ++i) {
    if (!streams[i]) continue;
    TlshStream& s = *streams[i];
    if (s.total_len() < kTlshMinInputLen) {
      s.Update(ByteView(kPadding).first(kTlshMinInputLen - s.total_len()));
    }
    out[i] = s.Finalize();
  }
  return out;
}

StateSequence MapDigestsToStates(std::span<const std::optional<TlshDigest>> digests,
                                 StateRegistry& registry, uint32_t epsilon) {
  StateSequence seq;
  seq.reserve(digests.size());
  for (const auto& digest : digests) {
    seq.push_back(digest ? registry.GetStateId(*digest, epsilon) : kInitialState);
  }
  return seq;
}

StateSequence Runtime::SaveStateSeq(StateRegistry& registry, uint32_t epsilon) {
  published_ = MapDigestsToStates(IterationDigests(), registry, epsilon);
  return published_;
}

StateSequence Runtime::OnProcessEnd(StateRegistry& registry, uint32_t epsilon) {
  OnProcessEnd();
  return SaveStateSeq(registry, epsilon);
}

}  // namespace statefuzz
