#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "statefuzz/ipsm.h"

using namespace statefuzz;

TEST(Ipsm, StartsWithInitialState) {
  Ipsm g;
  EXPECT_TRUE(g.HasState(kInitialState));
  EXPECT_EQ(g.state_count(), 1u);
  EXPECT_EQ(g.transition_count(), 0u);
}

TEST(Ipsm, IngestAddsStatesAndTransitions) {
  Ipsm g;
  auto added = g.IngestSequence(1, {1, 2, 2, 3}, true);
  EXPECT_EQ(added, (std::vector<StateId>{1, 2, 3}));
  EXPECT_EQ(g.state_count(), 4u);
  EXPECT_EQ(g.transition_count(), 4u);  // 0->1, 1->2, 2->2, 2->3
  EXPECT_EQ(g.transitions().at({2, 2}), 1u);
  added = g.IngestSequence(2, {1, 2, 2}, false);
  EXPECT_TRUE(added.empty());
  EXPECT_EQ(g.transitions().at({0, 1}), 2u);
  EXPECT_EQ(g.transitions().at({2, 2}), 2u);
  EXPECT_EQ(g.states().at(2).interesting_inputs.size(), 1u);
}

TEST(Ipsm, InterestingListIsBounded) {
  Ipsm g;
  for (InputId id = 0; id < 100; ++id) g.IngestSequence(id, {1}, true);
  const auto& list = g.states().at(1).interesting_inputs;
  EXPECT_EQ(list.size(), Ipsm::kMaxInterestingPerState);
  EXPECT_EQ(list.front(), 100 - static_cast<InputId>(Ipsm::kMaxInterestingPerState));
}

TEST(Ipsm, Weight) {
  Ipsm g;
  g.IngestSequence(1, {1}, true);
  EXPECT_DOUBLE_EQ(g.Weight(1), 1.0);
  for (int i = 0; i < 9; ++i) g.RecordFuzz(1);
  g.RecordPath(1);
  EXPECT_DOUBLE_EQ(g.Weight(1), 2.0 / 10.0);
}

TEST(Ipsm, SelectionFollowsWeights) {
  Ipsm g;
  g.IngestSequence(1, {1, 2}, true);
  // State 1 heavily fuzzed without progress, state 2 untouched.
  for (int i = 0; i < 99; ++i) g.RecordFuzz(1);
  Rng rng(5);
  std::map<StateId, int> hits;
  const int trials = 20000;
  for (int i = 0; i < trials; ++i) {
    Ipsm copy = g;
    hits[copy.SelectState(rng)]++;
  }
  // Weights: state 0 -> 1, state 1 -> 0.01, state 2 -> 1.
  const double total = 2.01;
  EXPECT_NEAR(hits[0] / double(trials), 1 / total, 0.02);
  EXPECT_NEAR(hits[1] / double(trials), 0.01 / total, 0.01);
  EXPECT_NEAR(hits[2] / double(trials), 1 / total, 0.02);
}

TEST(Ipsm, SelectionUpdatesSelectedCounter) {
  Ipsm g;
  Rng rng(1);
  EXPECT_EQ(g.SelectState(rng), kInitialState);  // nothing eligible
  g.IngestSequence(1, {1}, false);
  g.IngestSequence(2, {1}, true);
  const StateId s = g.SelectState(rng);
  EXPECT_EQ(g.states().at(s).selected, 1u);
}

TEST(Ipsm, PickReturnsMessageSentFromState) {
  Ipsm g;
  g.IngestSequence(7, {1, 2, 3}, true);
  const std::vector<StateId> msg_states = {1, 2, 3};
  Rng rng(1);
  auto lookup = [&](InputId id) { return id == 7 ? &msg_states : nullptr; };
  EXPECT_EQ(g.PickInputAndPosition(2, rng, lookup).message_index, 2u);
  EXPECT_EQ(g.PickInputAndPosition(kInitialState, rng, lookup).message_index, 0u);
  EXPECT_EQ(g.PickInputAndPosition(3, rng, lookup).input_id, 7);
}

TEST(Ipsm, PickDropsStaleInputs) {
  Ipsm g;
  g.IngestSequence(1, {1}, true);
  g.IngestSequence(2, {1}, true);
  const std::vector<StateId> states = {1};
  Rng rng(3);
  auto lookup = [&](InputId id) { return id == 2 ? &states : nullptr; };
  for (int i = 0; i < 10; ++i) EXPECT_EQ(g.PickInputAndPosition(1, rng, lookup).input_id, 2);
  EXPECT_EQ(g.states().at(1).interesting_inputs.size(), 1u);
  auto none = [](InputId) -> const std::vector<StateId>* { return nullptr; };
  EXPECT_THROW(g.PickInputAndPosition(1, rng, none), StaleCorpusError);
}

TEST(Ipsm, DotAndJsonAgree) {
  Ipsm g;
  g.IngestSequence(1, {1, 2, 2, 3, 1}, true);
  g.IngestSequence(2, {4}, false);
  const GraphShape shape = g.Shape();
  EXPECT_EQ(Ipsm::ParseDot(g.ToDot()), shape);
  EXPECT_EQ(Ipsm::ShapeFromJson(nlohmann::json::parse(g.ToJson().dump())), shape);
  EXPECT_EQ(shape.vertices.size(), 5u);
  EXPECT_TRUE(shape.edges.contains({2, 2}));
  EXPECT_NE(g.ToDot().find("digraph"), std::string::npos);
}

TEST(Ipsm, ParseDotToleratesIsolatedVertices) {
  const GraphShape g = Ipsm::ParseDot("digraph x {\n  0 [shape=doublecircle];\n  5;\n  0 -> 0;\n}\n");
  EXPECT_EQ(g.vertices, (std::set<StateId>{0, 5}));
  EXPECT_EQ(g.edges.size(), 1u);
}
