#pragma once

// Insert-only registry mapping TLSH digests to dense state ids, backed by a
// multi-vantage-point tree.
//
// TLSH distance violates the triangle inequality, so subtree pruning uses a
// relaxed form: for the header component d(x,z) <= 12 (d(x,y) + d(y,z)), for
// the body component the factor is 2. Lower bounds are derived per component
// and summed, which keeps every lookup exactly equal to a linear scan.

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "statefuzz/tlsh.h"

namespace statefuzz {

using StateId = uint32_t;
// Dummy initial state; also the sink for snapshots with no usable digest.
inline constexpr StateId kInitialState = 0;

class StateRegistry {
 public:
  static constexpr size_t kLeafCapacity = 16;

  StateRegistry();
  ~StateRegistry();
  StateRegistry(StateRegistry&&) noexcept;
  StateRegistry& operator=(StateRegistry&&) noexcept;
  StateRegistry(const StateRegistry&) = delete;
  StateRegistry& operator=(const StateRegistry&) = delete;

  // Nearest stored digest within `radius`; ties go to the lowest id.
  std::optional<StateId> Lookup(const TlshDigest& h, uint32_t radius) const;
  // Assigns count() + 1. The caller has already established that nothing
  // lies within its radius.
  StateId Insert(const TlshDigest& h);
  // Lookup, then insert on a miss. Invalid digests map to kInitialState and
  // are never stored.
  StateId GetStateId(const TlshDigest& h, uint32_t epsilon);

  size_t count() const { return entries_.size(); }
  const TlshDigest& digest(StateId id) const { return entries_.at(id - 1); }

  // Number of distance evaluations performed by lookups so far.
  uint64_t distance_evaluations() const { return distance_evals_; }

  // [{"state_id": n, "digest": "<hex>"}, ...] in id order.
  nlohmann::json ToJson() const;
  static StateRegistry FromJson(const nlohmann::json& j);

 private:
  struct Node;
  struct Best;

  void InsertInto(Node& node, StateId id);
  void Search(const Node& node, const TlshDigest& h, uint32_t radius, Best& best) const;
  TlshDistanceParts Dist(StateId a, StateId b) const;

  std::vector<TlshDigest> entries_;  // entries_[id - 1]
  std::unique_ptr<Node> root_;
  mutable uint64_t distance_evals_ = 0;
};

}  // namespace statefuzz
