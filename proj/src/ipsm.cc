#include "statefuzz/ipsm.h"

#include <algorithm>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

namespace statefuzz {

Ipsm::Ipsm() { stats_.emplace(kInitialState, StateStats{}); }

void Ipsm::AddInteresting(StateId s, InputId id) {
  auto& list = stats_[s].interesting_inputs;
  if (std::find(list.begin(), list.end(), id) != list.end()) return;
  list.push_back(id);
  if (list.size() > kMaxInterestingPerState) list.pop_front();
}

std::vector<StateId> Ipsm::IngestSequence(InputId input_id, const StateSequence& seq,
                                          bool was_interesting) {
  std::vector<StateId> added;
  StateId prev = kInitialState;
  if (was_interesting) AddInteresting(kInitialState, input_id);
  for (StateId s : seq) {
    if (!stats_.contains(s)) {
      stats_.emplace(s, StateStats{});
      added.push_back(s);
    }
    ++transitions_[Transition{prev, s}];
    if (was_interesting) AddInteresting(s, input_id);
    prev = s;
  }
  return added;
}

double Ipsm::Weight(StateId s) const {
  const StateStats& st = stats_.at(s);
  return static_cast<double>(st.paths + 1) /
         (static_cast<double>(st.fuzzs + 1) * static_cast<double>(st.selected + 1));
}

StateId Ipsm::SelectState(Rng& rng) {
  double total = 0.0;
  for (const auto& [id, st] : stats_) {
    if (!st.interesting_inputs.empty()) total += Weight(id);
  }
  if (total <= 0.0) return kInitialState;
  double r = RandUnit(rng) * total;
  StateId chosen = kInitialState;
  bool found = false;
  for (const auto& [id, st] : stats_) {
    if (st.interesting_inputs.empty()) continue;
    chosen = id;
    found = true;
    r -= Weight(id);
    if (r < 0.0) break;
  }
  if (!found) return kInitialState;
  stats_[chosen].selected++;
  return chosen;
}

Ipsm::Pick Ipsm::PickInputAndPosition(StateId s, Rng& rng, const MessageStatesLookup& lookup) {
  auto& list = stats_.at(s).interesting_inputs;
  while (!list.empty()) {
    const size_t k = RandBelow(rng, list.size());
    const InputId id = list[k];
    const std::vector<StateId>* states = lookup(id);
    if (states != nullptr) {
      if (s == kInitialState) return {id, 0};
      auto it = std::find(states->begin(), states->end(), s);
      if (it != states->end()) {
        return {id, static_cast<size_t>(it - states->begin()) + 1};
      }
    }
    list.erase(list.begin() + static_cast<std::ptrdiff_t>(k));
  }
  throw StaleCorpusError("no available input covers state " + std::to_string(s));
}

GraphShape Ipsm::Shape() const {
  GraphShape g;
  for (const auto& [id, st] : stats_) g.vertices.insert(id);
  for (const auto& [t, n] : transitions_) g.edges.insert(t);
  return g;
}

std::string Ipsm::ToDot() const {
  std::ostringstream out;
  out << "digraph ipsm {\n";
  for (const auto& [id, st] : stats_) {
    out << "  " << id;
    if (id == kInitialState) out << " [shape=doublecircle, label=\"0\"]";
    out << ";\n";
  }
  for (const auto& [t, n] : transitions_) {
    out << "  " << t.from << " -> " << t.to << " [label=\"n=" << n << "\"];\n";
  }
  out << "}\n";
  return out.str();
}

nlohmann::json Ipsm::ToJson() const {
  nlohmann::json states = nlohmann::json::array();
  for (const auto& [id, st] : stats_) {
    states.push_back({{"state_id", id},
                      {"fuzzs", st.fuzzs},
                      {"paths", st.paths},
                      {"selected", st.selected},
                      {"n_interesting", st.interesting_inputs.size()}});
  }
  nlohmann::json transitions = nlohmann::json::array();
  for (const auto& [t, n] : transitions_) {
    transitions.push_back({{"from", t.from}, {"to", t.to}, {"count", n}});
  }
  return {{"states", states}, {"transitions", transitions}};
}

GraphShape Ipsm::ParseDot(const std::string& dot) {
  static const std::regex kEdge(R"(^\s*(\d+)\s*->\s*(\d+))");
  static const std::regex kVertex(R"(^\s*(\d+)\s*(\[|;))");
  GraphShape g;
  std::istringstream in(dot);
  std::string line;
  std::smatch m;
  while (std::getline(in, line)) {
    if (std::regex_search(line, m, kEdge)) {
      const auto from = static_cast<StateId>(std::stoul(m[1]));
      const auto to = static_cast<StateId>(std::stoul(m[2]));
      g.edges.insert({from, to});
      g.vertices.insert(from);
      g.vertices.insert(to);
    } else if (std::regex_search(line, m, kVertex)) {
      g.vertices.insert(static_cast<StateId>(std::stoul(m[1])));
    }
  }
  return g;
}

GraphShape Ipsm::ShapeFromJson(const nlohmann::json& j) {
  GraphShape g;
  for (const auto& s : j.at("states")) g.vertices.insert(s.at("state_id").get<StateId>());
  for (const auto& t : j.at("transitions")) {
    g.edges.insert({t.at("from").get<StateId>(), t.at("to").get<StateId>()});
  }
  return g;
}

}  // namespace statefuzz
