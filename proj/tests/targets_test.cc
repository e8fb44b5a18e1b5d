#include <gtest/gtest.h>

#include <fmt/format.h>

#include "statefuzz/executor.h"
#include "support.h"

using namespace statefuzz;
using testing_support::Ftp;
using testing_support::Raw;

namespace {

struct Analysed {
  ExecResult result;
  StateSequence iterations;
  std::vector<StateId> per_message;
};

Analysed Analyse(Executor& ex, StateRegistry& reg, const FuzzInput& in, uint32_t eps = 5) {
  Analysed a;
  a.result = ex.Run(in, true);
  a.iterations = MapDigestsToStates(a.result.digests, reg, eps);
  a.per_message = MessageStates(a.result, a.iterations);
  return a;
}

std::string ReplyText(const ExecResult& r, size_t msg) {
  std::string out;
  for (const Bytes& b : r.replies.at(msg)) out += AsString(b);
  return out;
}

Bytes Tlv(uint8_t type, const Bytes& value) {
  Bytes f = {type, static_cast<uint8_t>(value.size()), static_cast<uint8_t>(value.size() >> 8)};
  f.insert(f.end(), value.begin(), value.end());
  return f;
}

}  // namespace

TEST(MiniFtp, BannerAndBasicReplies) {
  Executor ex(MiniFtpTarget(), {});
  const ExecResult r = ex.Run(Ftp({"NOOP", "SYST", "PWD", "USER", "BOGUS", "QUIT", "NOOP"}), false);
  ASSERT_EQ(r.banner.size(), 1u);
  EXPECT_TRUE(AsString(r.banner[0]).starts_with("220"));
  ASSERT_EQ(r.replies.size(), 6u);  // nothing after QUIT
  EXPECT_TRUE(ReplyText(r, 0).starts_with("200"));
  EXPECT_TRUE(ReplyText(r, 1).starts_with("215"));
  EXPECT_TRUE(ReplyText(r, 2).starts_with("530"));
  EXPECT_TRUE(ReplyText(r, 3).starts_with("501"));
  EXPECT_TRUE(ReplyText(r, 4).starts_with("500"));
  EXPECT_TRUE(ReplyText(r, 5).starts_with("221"));
  EXPECT_EQ(r.outcome, Outcome::kOk);
}

TEST(MiniFtp, LoginStatesAndSelfLoops) {
  Executor ex(MiniFtpTarget(), {});
  StateRegistry reg;
  const auto a = Analyse(ex, reg, Ftp({"NOOP", "USER ftp", "PASS ftp", "SYST", "NOOP", "PWD"}));
  const auto& s = a.per_message;
  ASSERT_EQ(s.size(), 6u);
  EXPECT_NE(s[0], kInitialState);
  EXPECT_NE(s[0], s[1]);
  EXPECT_NE(s[1], s[2]);
  EXPECT_NE(s[0], s[2]);
  EXPECT_EQ(s[3], s[2]);
  EXPECT_EQ(s[4], s[2]);
  EXPECT_EQ(s[5], s[2]);
}

TEST(MiniFtp, ResponseCodesTrackReplies) {
  Executor ex(MiniFtpTarget(), {});
  const ExecResult r = ex.Run(Ftp({"USER ftp", "PASS ftp", "SYST"}), false);
  ASSERT_EQ(r.response_codes.size(), 3u);
  EXPECT_EQ(r.response_codes[0], 331u);
  EXPECT_EQ(r.response_codes[1], 230u);
  EXPECT_EQ(r.response_codes[2], 215u);
}

TEST(MiniFtp, PlantedBugNeedsLoginPortAndLongName) {
  Executor ex(MiniFtpTarget(), {});
  const std::string long_name(65, 'A');
  const ExecResult crash =
      ex.Run(Ftp({"USER ftp", "PASS ftp", "PORT 127,0,0,1,4,1", "STOR " + long_name}), false);
  ASSERT_EQ(crash.outcome, Outcome::kCrash);
  EXPECT_EQ(crash.crash->bug_id, 1u);
  EXPECT_EQ(crash.crash->site, "mini_ftp.stor_copy_filename");
  EXPECT_EQ(crash.crash->group_key, fmt::format("b1-{:08x}", Fnv1a32("mini_ftp.stor_copy_filename")));

  // Near misses.
  EXPECT_EQ(ex.Run(Ftp({"USER ftp", "PASS ftp", "PORT 127,0,0,1,4,1", "STOR " + std::string(64, 'A')}), false).outcome,
            Outcome::kOk);
  const ExecResult no_port = ex.Run(Ftp({"USER ftp", "PASS ftp", "STOR " + long_name}), false);
  EXPECT_EQ(no_port.outcome, Outcome::kOk);
  EXPECT_TRUE(ReplyText(no_port, 2).starts_with("425"));
  const ExecResult no_login = ex.Run(Ftp({"USER ftp", "PORT 127,0,0,1,4,1", "STOR " + long_name}), false);
  EXPECT_EQ(no_login.outcome, Outcome::kOk);
  EXPECT_TRUE(ReplyText(no_login, 1).starts_with("530"));
  const ExecResult bad_port = ex.Run(Ftp({"USER ftp", "PASS ftp", "PORT 1,2,3", "STOR " + long_name}), false);
  EXPECT_EQ(bad_port.outcome, Outcome::kOk);
  EXPECT_TRUE(ReplyText(bad_port, 2).starts_with("501"));
}

TEST(MiniFtp, SeedsRunCleanAndDeterministically) {
  Executor ex(MiniFtpTarget(), {});
  StateRegistry reg;
  for (const FuzzInput& seed : ReadSeedDirectory(testing_support::SeedDir("mini-ftp"))) {
    const auto first = Analyse(ex, reg, seed);
    EXPECT_EQ(first.result.outcome, Outcome::kOk);
    for (int i = 0; i < 3; ++i) {
      const auto again = Analyse(ex, reg, seed);
      EXPECT_EQ(again.iterations, first.iterations);
      EXPECT_EQ(again.result.digests, first.result.digests);
    }
  }
}

TEST(Echo, TwoStatesOnly) {
  Executor ex(EchoTarget(), {});
  StateRegistry reg;
  const auto a = Analyse(ex, reg, Raw({"hello", "", "world", std::string(500, 'z')}));
  ASSERT_EQ(a.result.replies.size(), 4u);
  EXPECT_EQ(AsString(a.result.replies[0].at(0)), "hello");
  std::set<StateId> states(a.iterations.begin(), a.iterations.end());
  EXPECT_EQ(states.size(), 1u);
  EXPECT_EQ(reg.count(), 1u);
}

TEST(Binproto, HandshakeAndBug) {
  Executor ex(BinprotoTarget(), {});
  const Bytes hello = Tlv(1, ToBytes("client-random")), key = Tlv(2, ToBytes("keymaterial"));
  const Bytes fin = Tlv(3, {}), ping = Tlv(5, {});
  FuzzInput ok;
  ok.messages = {hello, key, fin, Tlv(4, Bytes(200, 'd')), ping};
  EXPECT_EQ(ex.Run(ok, false).outcome, Outcome::kOk);

  FuzzInput bug = ok;
  bug.messages[3] = Tlv(4, Bytes(201, 'd'));
  const ExecResult r = ex.Run(bug, false);
  ASSERT_EQ(r.outcome, Outcome::kCrash);
  EXPECT_EQ(r.crash->bug_id, 2u);

  FuzzInput early;
  early.messages = {hello, Tlv(4, Bytes(300, 'd'))};
  const ExecResult rejected = ex.Run(early, false);
  EXPECT_EQ(rejected.outcome, Outcome::kOk);
  EXPECT_EQ(rejected.replies[1].at(0)[0], 0xFF);
}

TEST(Binproto, RejectRestoresInitialMemory) {
  Executor ex(BinprotoTarget(), {});
  StateRegistry reg;
  FuzzInput in;
  in.messages = {Tlv(5, {}), Tlv(1, ToBytes("abcd")), Tlv(3, {}), Tlv(5, {})};
  const auto a = Analyse(ex, reg, in);
  ASSERT_EQ(a.iterations.size(), 4u);
  EXPECT_NE(a.iterations[1], a.iterations[0]);
  EXPECT_EQ(a.iterations[2], a.iterations[0]);  // FINISHED out of order resets
  EXPECT_EQ(a.iterations[3], a.iterations[0]);
}

TEST(Binproto, HasNoResponseCodes) {
  EXPECT_FALSE(BinprotoTarget().supports_response_codes);
  EXPECT_TRUE(MiniFtpTarget().supports_response_codes);
}

TEST(HttpToy, DefaultHooksLagOneRequestBehind) {
  Executor ex(HttpToyTarget(), {});
  StateRegistry reg;
  const auto a = Analyse(ex, reg, Raw({"GET /", "POST /login", "GET /"}));
  ASSERT_EQ(a.iterations.size(), 3u);
  // The boundary is the interim reply, sent before the request takes effect.
  EXPECT_EQ(a.iterations[0], a.iterations[1]);
  EXPECT_NE(a.iterations[1], a.iterations[2]);
}

TEST(HttpToy, CustomHooksMoveTheBoundary) {
  const TargetSpec spec = RegisterCustomIoHooks(HttpToyTarget(), {"http_reply"}, {"http_read_request"});
  Executor ex(spec, {});
  StateRegistry reg;
  const auto a = Analyse(ex, reg, Raw({"GET /", "POST /login", "GET /"}));
  ASSERT_EQ(a.iterations.size(), 3u);
  EXPECT_NE(a.iterations[0], a.iterations[1]);
  EXPECT_EQ(a.iterations[1], a.iterations[2]);
}

TEST(HttpToy, HookListSyntax) {
  const TargetSpec spec = ApplyHookList(HttpToyTarget(), "send:http_reply, http_read_request");
  EXPECT_EQ(spec.hooks.send(), std::vector<std::string>{"http_reply"});
  EXPECT_EQ(spec.hooks.receive(), std::vector<std::string>{"http_read_request"});
  EXPECT_EQ(spec.hooks.Classify("write"), HookRole::kNone);

  const TargetSpec only_send = ApplyHookList(HttpToyTarget(), "send:http_reply");
  EXPECT_EQ(only_send.hooks.receive(), HookRouter::DefaultReceive());
}

TEST(HttpToy, UnknownHookNamesAvailablePoints) {
  try {
    RegisterCustomIoHooks(HttpToyTarget(), {"sendfile"}, {});
    FAIL() << "unknown routine accepted";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("sendfile"), std::string::npos);
    EXPECT_NE(msg.find("http_reply"), std::string::npos);
    EXPECT_NE(msg.find("http_read_request"), std::string::npos);
  }
  EXPECT_THROW(ApplyHookList(HttpToyTarget(), "bogus"), std::invalid_argument);
  const TargetSpec unchanged = RegisterCustomIoHooks(HttpToyTarget(), {}, {});
  EXPECT_EQ(unchanged.hooks.send(), HookRouter::DefaultSend());
}

TEST(Targets, Registry) {
  for (const auto& name : TargetNames()) EXPECT_EQ(MakeTarget(name).name, name);
  EXPECT_THROW(MakeTarget("nope"), std::invalid_argument);
}

TEST(Targets, ThreeDigitCode) {
  EXPECT_EQ(ThreeDigitCode(ToBytes("230 ok")), 230u);
  EXPECT_FALSE(ThreeDigitCode(ToBytes("2x0")).has_value());
  EXPECT_FALSE(ThreeDigitCode(ToBytes("20")).has_value());
}

TEST(Targets, TraceRecordsHookEvents) {
  ExecOptions opts;
  opts.trace = true;
  Executor ex(MiniFtpTarget(), opts);
  const ExecResult r = ex.Run(Ftp({"USER ftp"}), true);
  auto has = [&](std::string_view prefix) {
    return std::any_of(r.trace.begin(), r.trace.end(), [&](const std::string& e) { return e.starts_with(prefix); });
  };
  EXPECT_TRUE(has("alloc #"));
  EXPECT_TRUE(has("on_receive recv"));
  EXPECT_TRUE(has("on_send send"));
  EXPECT_TRUE(has("free #"));
}

TEST(Targets, CoverageReflectsPath) {
  Executor ex(MiniFtpTarget(), {});
  ex.Run(Ftp({"NOOP"}), false);
  const std::vector<uint8_t> a(ex.coverage().begin(), ex.coverage().end());
  ex.Run(Ftp({"USER ftp", "PASS ftp"}), false);
  const std::vector<uint8_t> b(ex.coverage().begin(), ex.coverage().end());
  EXPECT_NE(a, b);
  EXPECT_GT(std::count_if(b.begin(), b.end(), [](uint8_t v) { return v != 0; }), 0);
  ex.Run(Ftp({"NOOP"}), false);
  EXPECT_EQ(std::vector<uint8_t>(ex.coverage().begin(), ex.coverage().end()), a);
}
