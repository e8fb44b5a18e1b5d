#include <gtest/gtest.h>

#include <set>

#include "oracle/reference.h"
#include "statefuzz/mutation.h"
#include "support.h"

using namespace statefuzz;
using testing_support::Raw;

namespace {

size_t Count(const std::map<DetStage, size_t>& counts, DetStage s) {
  auto it = counts.find(s);
  return it == counts.end() ? 0 : it->second;
}

void ExpectOracleCounts(const Bytes& msg) {
  FuzzInput in;
  in.messages = {msg};
  const auto counts = CountDeterministic(in, 0, {}, {});
  const auto flips = oracle::FlipCounts(msg.size());
  const auto values = oracle::ValueStageCounts(msg);
  EXPECT_EQ(Count(counts, DetStage::kFlip1), flips.flip1);
  EXPECT_EQ(Count(counts, DetStage::kFlip2), flips.flip2);
  EXPECT_EQ(Count(counts, DetStage::kFlip4), flips.flip4);
  EXPECT_EQ(Count(counts, DetStage::kFlip8), flips.flip8);
  EXPECT_EQ(Count(counts, DetStage::kFlip16), flips.flip16);
  EXPECT_EQ(Count(counts, DetStage::kFlip32), flips.flip32);
  EXPECT_EQ(Count(counts, DetStage::kArith8), values.arith8);
  EXPECT_EQ(Count(counts, DetStage::kArith16), values.arith16);
  EXPECT_EQ(Count(counts, DetStage::kArith32), values.arith32);
  EXPECT_EQ(Count(counts, DetStage::kInterest8), values.interest8);
  EXPECT_EQ(Count(counts, DetStage::kInterest16), values.interest16);
  EXPECT_EQ(Count(counts, DetStage::kInterest32), values.interest32);
}

}  // namespace

TEST(Deterministic, TwoByteMessageCounts) {
  FuzzInput in;
  in.messages = {Bytes{0x41, 0x42}};
  const auto c = CountDeterministic(in, 0, {}, {});
  EXPECT_EQ(Count(c, DetStage::kFlip1), 16u);
  EXPECT_EQ(Count(c, DetStage::kFlip2), 15u);
  EXPECT_EQ(Count(c, DetStage::kFlip4), 13u);
  EXPECT_EQ(Count(c, DetStage::kFlip8), 2u);
  EXPECT_EQ(Count(c, DetStage::kFlip16), 1u);
  EXPECT_EQ(Count(c, DetStage::kFlip32), 0u);
  EXPECT_EQ(Count(c, DetStage::kArith8), 140u);
  EXPECT_EQ(Count(c, DetStage::kArith16), 140u);
  EXPECT_EQ(Count(c, DetStage::kArith32), 0u);
  EXPECT_EQ(Count(c, DetStage::kInterest8), 18u);
  EXPECT_EQ(Count(c, DetStage::kInterest16), 28u);
  EXPECT_EQ(Count(c, DetStage::kInterest32), 0u);
  EXPECT_EQ(Count(c, DetStage::kDictOverwrite), 0u);
  EXPECT_EQ(Count(c, DetStage::kSplice), 0u);
}

TEST(Deterministic, CountsMatchEnumerationOracle) {
  ExpectOracleCounts({0x41, 0x42});
  ExpectOracleCounts({0x00, 0xFF});  // interesting values coincide with the parent
  ExpectOracleCounts({0x10});
  ExpectOracleCounts(ToBytes("USER ftp\r\n"));
  std::mt19937_64 rng(41);
  for (int i = 0; i < 5; ++i) ExpectOracleCounts(testing_support::RandomBytes(rng, 3 + i));
}

TEST(Deterministic, OnlyTargetMessageChanges) {
  const FuzzInput in = Raw({"USER ftp\r\n", "PASS x\r\n", "QUIT\r\n"});
  const Dictionary dict = Dictionary::Parse("\"STOR \"\n");
  const std::vector<FuzzInput> donors = {Raw({"AAAA", "PASS yyyyy\r\n"})};
  size_t n = 0;
  std::map<DetStage, std::set<Bytes>> seen;
  DeterministicPass(in, 1, dict, donors, [&](DetStage s, FuzzInput&& m) {
    ++n;
    EXPECT_EQ(m.messages.size(), 3u);
    EXPECT_EQ(m.messages[0], in.messages[0]);
    EXPECT_EQ(m.messages[2], in.messages[2]);
    EXPECT_NE(m.messages[1], in.messages[1]);
    EXPECT_TRUE(seen[s].insert(m.messages[1]).second) << StageName(s);
    EXPECT_EQ(m.provenance.operators_applied, std::vector<std::string>{std::string(StageName(s))});
    return true;
  });
  EXPECT_GT(n, 100u);
  EXPECT_EQ(seen[DetStage::kDictOverwrite].size(), 8u - 5u + 1u);
  EXPECT_EQ(seen[DetStage::kDictInsert].size(), 9u);
  EXPECT_EQ(seen[DetStage::kSplice].size(), 1u);
}

TEST(Deterministic, SinkCanStopThePass) {
  const FuzzInput in = Raw({"hello"});
  size_t n = 0;
  DeterministicPass(in, 0, {}, {}, [&](DetStage, FuzzInput&&) { return ++n < 10; });
  EXPECT_EQ(n, 10u);
}

TEST(Deterministic, IndexPastEndDoesNothing) {
  const FuzzInput in = Raw({"a"});
  EXPECT_TRUE(CountDeterministic(in, 1, {}, {}).empty());
}

TEST(Deterministic, SpliceJoinsAtMidpointOfDifference) {
  const FuzzInput in = Raw({"abcdefgh"});
  const std::vector<FuzzInput> donors = {Raw({"abXXXXgh"})};
  std::vector<Bytes> spliced;
  DeterministicPass(in, 0, {}, donors, [&](DetStage s, FuzzInput&& m) {
    if (s == DetStage::kSplice) spliced.push_back(m.messages[0]);
    return true;
  });
  ASSERT_EQ(spliced.size(), 1u);
  // Differences span 2..5; split at 3.
  EXPECT_EQ(AsString(spliced[0]), "abcXXXgh");
}

TEST(Havoc, ReproducibleWithSeed) {
  const FuzzInput in = Raw({"USER a\r\n", "PASS b\r\n"});
  const std::vector<FuzzInput> corpus = {in, Raw({"NOOP\r\n"})};
  Rng a(99), b(99);
  for (int i = 0; i < 200; ++i) {
    EXPECT_EQ(StackedMutation(in, i % 3, corpus, {}, a).messages,
              StackedMutation(in, i % 3, corpus, {}, b).messages);
  }
}

TEST(Havoc, ByteOpsKeepOtherMessages) {
  const FuzzInput in = Raw({"first", "second-message", "third"});
  Rng rng(7);
  for (uint8_t op = 0; op <= static_cast<uint8_t>(HavocOp::kOverwriteFixedBytes); ++op) {
    for (int rep = 0; rep < 20; ++rep) {
      FuzzInput m = in;
      size_t idx = 1;
      HavocContext ctx{m, idx, {}, Dictionary{}, rng};
      ApplyHavocOp(static_cast<HavocOp>(op), ctx);
      EXPECT_EQ(m.messages[0], in.messages[0]);
      EXPECT_EQ(m.messages[2], in.messages[2]);
      EXPECT_EQ(idx, 1u);
    }
  }
}

TEST(Havoc, MessageOps) {
  const FuzzInput in = Raw({"a", "b", "c"});
  const std::vector<FuzzInput> corpus = {Raw({"X"})};
  Rng rng(8);
  Dictionary dict;
  {
    FuzzInput m = in;
    size_t idx = 1;
    HavocContext ctx{m, idx, corpus, dict, rng};
    ASSERT_TRUE(ApplyHavocOp(HavocOp::kInsertMessageBefore, ctx));
    EXPECT_EQ(m.messages.size(), 4u);
    EXPECT_EQ(AsString(m.messages[1]), "X");
    EXPECT_EQ(idx, 2u);
    EXPECT_EQ(AsString(m.messages[idx]), "b");
  }
  {
    FuzzInput m = in;
    size_t idx = 1;
    HavocContext ctx{m, idx, corpus, dict, rng};
    ASSERT_TRUE(ApplyHavocOp(HavocOp::kInsertMessageAfter, ctx));
    EXPECT_EQ(AsString(m.messages[2]), "X");
    EXPECT_EQ(idx, 1u);
  }
  {
    FuzzInput m = in;
    size_t idx = 1;
    HavocContext ctx{m, idx, corpus, dict, rng};
    ASSERT_TRUE(ApplyHavocOp(HavocOp::kReplaceMessage, ctx));
    EXPECT_EQ(m.messages.size(), 3u);
    EXPECT_EQ(AsString(m.messages[1]), "X");
  }
  {
    FuzzInput m = in;
    size_t idx = 1;
    HavocContext ctx{m, idx, corpus, dict, rng};
    ASSERT_TRUE(ApplyHavocOp(HavocOp::kDuplicateMessage, ctx));
    EXPECT_EQ(m.messages.size(), 4u);
    EXPECT_EQ(AsString(m.messages[1]), "b");
    EXPECT_EQ(AsString(m.messages[2]), "b");
  }
}

TEST(Havoc, DictionaryOpsNeedTokens) {
  FuzzInput m = Raw({"abcdef"});
  size_t idx = 0;
  Rng rng(9);
  Dictionary empty;
  HavocContext ctx{m, idx, {}, empty, rng};
  EXPECT_FALSE(ApplyHavocOp(HavocOp::kDictInsert, ctx));
  const Dictionary dict = Dictionary::Parse("\"ZZ\"\n");
  HavocContext ctx2{m, idx, {}, dict, rng};
  EXPECT_TRUE(ApplyHavocOp(HavocOp::kDictInsert, ctx2));
  EXPECT_NE(AsString(m.messages[0]).find("ZZ"), std::string::npos);
}

TEST(Havoc, StaysUnderSizeCap) {
  FuzzInput big;
  big.messages.push_back(Bytes(kMaxInputBytes - 10, 'a'));
  Rng rng(10);
  for (int i = 0; i < 20; ++i) {
    EXPECT_LE(StackedMutation(big, 0, {}, {}, rng).total_bytes(), kMaxInputBytes);
  }
}

TEST(Havoc, TargetAtEndAppendsMessage) {
  const FuzzInput in = Raw({"a"});
  const std::vector<FuzzInput> corpus = {Raw({"NOOP"})};
  Rng rng(11);
  const FuzzInput m = StackedMutation(in, 1, corpus, {}, rng);
  EXPECT_GE(m.messages.size(), 2u);
  EXPECT_EQ(m.provenance.operators_applied.front(), "append_message");
}

TEST(Trim, DropsIrrelevantMessagesAndBytes) {
  const FuzzInput in = Raw({"noise", "keep-KEY-here", "more noise"});
  auto has_key = [](const FuzzInput& c) {
    for (const auto& m : c.messages) {
      if (AsString(m).find("KEY") != std::string::npos) return true;
    }
    return false;
  };
  const FuzzInput t = TrimInput(in, has_key);
  ASSERT_EQ(t.messages.size(), 1u);
  EXPECT_EQ(AsString(t.messages[0]), "KEY");
}

TEST(Trim, RejectedOriginalIsReturnedUnchanged) {
  const FuzzInput in = Raw({"a", "b"});
  size_t calls = 0;
  const FuzzInput t = TrimInput(in, [&](const FuzzInput&) {
    ++calls;
    return false;
  });
  EXPECT_EQ(t, in);
  EXPECT_EQ(calls, 1u);
}

TEST(Dictionary, ParsesQuotesEscapesAndComments) {
  const Dictionary d = Dictionary::Parse(
      "# comment\n"
      "\n"
      "\"USER \"\n"
      "plain\n"
      "\"\\r\\n\"\n"
      "\"\\x41\\\\\\\"\"\n");
  ASSERT_EQ(d.tokens.size(), 4u);
  EXPECT_EQ(AsString(d.tokens[0]), "USER ");
  EXPECT_EQ(AsString(d.tokens[1]), "plain");
  EXPECT_EQ(AsString(d.tokens[2]), "\r\n");
  EXPECT_EQ(AsString(d.tokens[3]), "A\\\"");
}

TEST(Dictionary, BundledFtpDictionaryLoads) {
  const Dictionary d = Dictionary::Load(testing_support::SourceDir() / "dicts/mini-ftp.dict");
  EXPECT_GE(d.tokens.size(), 5u);
}
