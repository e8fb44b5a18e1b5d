#pragma once

// The inferred protocol state machine: states and transitions accumulated
// from observed state sequences, per-state fuzzing statistics, and the
// target-state selection heuristic.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "statefuzz/mvp_index.h"
#include "statefuzz/rng.h"
#include "statefuzz/runtime.h"

namespace statefuzz {

using InputId = int64_t;

struct StateStats {
  uint64_t fuzzs = 0;     // mutated inputs generated while targeting this state
  uint64_t paths = 0;     // of those, how many were saved as interesting
  uint64_t selected = 0;  // times chosen as the fuzzing target
  std::deque<InputId> interesting_inputs;
};

struct Transition {
  StateId from;
  StateId to;
  auto operator<=>(const Transition&) const = default;
};

// Vertex and edge sets, as recovered from an export.
struct GraphShape {
  std::set<StateId> vertices;
  std::set<Transition> edges;
  bool operator==(const GraphShape&) const = default;
};

class StaleCorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Ipsm {
 public:
  static constexpr size_t kMaxInterestingPerState = 64;

  Ipsm();

  // Prepends the initial state, adds unseen states and transitions, bumps
  // traversal counts, and records the input as interesting for every state
  // on the path when `was_interesting`. Returns states seen for the first time.
  std::vector<StateId> IngestSequence(InputId input_id, const StateSequence& seq,
                                      bool was_interesting);

  // (paths + 1) / ((fuzzs + 1) * (selected + 1)).
  double Weight(StateId s) const;
  // Samples among states with interesting inputs, proportionally to Weight().
  // Returns kInitialState when no state is eligible.
  StateId SelectState(Rng& rng);

  struct Pick {
    InputId input_id;
    size_t message_index;
  };
  // Post-message states of an input, or nullptr if the input is gone.
  using MessageStatesLookup = std::function<const std::vector<StateId>*(InputId)>;
  // Chooses one of the state's interesting inputs and the index of the
  // message sent from that state (first occurrence). Inputs that are no
  // longer available are dropped; throws StaleCorpusError if none remain.
  Pick PickInputAndPosition(StateId s, Rng& rng, const MessageStatesLookup& lookup);

  void RecordFuzz(StateId s) { stats_[s].fuzzs++; }
  void RecordPath(StateId s) { stats_[s].paths++; }

  bool HasState(StateId s) const { return stats_.contains(s); }
  size_t state_count() const { return stats_.size(); }
  size_t transition_count() const { return transitions_.size(); }
  const std::map<StateId, StateStats>& states() const { return stats_; }
  const std::map<Transition, uint64_t>& transitions() const { return transitions_; }
  GraphShape Shape() const;

  std::string ToDot() const;
  // {"states": [{state_id, fuzzs, paths, selected, n_interesting}],
  //  "transitions": [{from, to, count}]}
  nlohmann::json ToJson() const;

  static GraphShape ParseDot(const std::string& dot);
  static GraphShape ShapeFromJson(const nlohmann::json& j);

 private:
  void AddInteresting(StateId s, InputId id);

  std::map<StateId, StateStats> stats_;
  std::map<Transition, uint64_t> transitions_;
};

}  // namespace statefuzz
