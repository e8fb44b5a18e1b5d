#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "statefuzz/engine.h"
#include "support.h"

using namespace statefuzz;
using testing_support::Raw;

namespace {

std::vector<FuzzInput> Seeds(const std::string& target) {
  return ReadSeedDirectory(testing_support::SeedDir(target));
}

// Crashes on "boom" in every other process instance.
class FlakyServer : public Server {
 public:
  explicit FlakyServer(bool armed) : armed_(armed) {}
  void Start(ServerEnv& env) override { ctx_ = env.Allocate(64); }
  bool Handle(ServerEnv& env, ByteView request) override {
    env.Io("recv");
    if (armed_ && AsString(request) == "boom") env.Crash(9, "flaky.site");
    env.Mem(ctx_)[0] = request.empty() ? 0 : request[0];
    env.Reply("send", "ok");
    return true;
  }

 private:
  bool armed_;
  AreaId ctx_ = 0;
};

TargetSpec FlakyTarget() {
  TargetSpec spec;
  spec.name = "flaky";
  auto counter = std::make_shared<int>(0);
  spec.factory = [counter] { return std::make_unique<FlakyServer>((*counter)++ % 2 == 0); };
  spec.io_routines = {{"recv", HookRole::kReceive}, {"send", HookRole::kSend}};
  return spec;
}

std::vector<nlohmann::json> StatsRecords(const std::filesystem::path& dir) {
  std::vector<nlohmann::json> out;
  std::istringstream in(testing_support::ReadText(dir / "stats.jsonl"));
  std::string line;
  while (std::getline(in, line)) {
    auto j = nlohmann::json::parse(line);
    j.erase("t");
    j.erase("execs_per_sec");
    out.push_back(j);
  }
  return out;
}

}  // namespace

TEST(Mode, Names) {
  EXPECT_EQ(ParseMode("response-code"), FuzzMode::kResponseCode);
  EXPECT_EQ(ModeName(FuzzMode::kStateless), "stateless");
  EXPECT_FALSE(ParseMode("other").has_value());
}

TEST(CoverageTracker, ReportsNewBitsOnce) {
  CoverageTracker t;
  std::vector<uint8_t> trace(kCoverageMapSize, 0);
  trace[10] = 3;
  auto copy = trace;
  EXPECT_EQ(t.Update(copy), kernels::NewBits::kNewEdge);
  copy = trace;
  EXPECT_EQ(t.Update(copy), kernels::NewBits::kNone);
  EXPECT_EQ(t.edges_seen(), 1u);
}

TEST(Campaign, RejectsMissingSeedsAndCodes) {
  EXPECT_THROW(Campaign(EchoTarget(), {}, {}), CampaignError);
  CampaignConfig cfg;
  cfg.mode = FuzzMode::kResponseCode;
  try {
    Campaign c(BinprotoTarget(), Seeds("binproto"), cfg);
    FAIL();
  } catch (const CampaignError& e) {
    EXPECT_NE(std::string(e.what()).find("lacks response codes"), std::string::npos);
  }
}

TEST(Campaign, ZeroBudgetKeepsSeedsOnly) {
  const auto dir = testing_support::ScratchDir("zero");
  CampaignConfig cfg;
  cfg.max_execs = 0;
  cfg.out_dir = dir;
  Campaign c(MiniFtpTarget(), Seeds("mini-ftp"), cfg);
  const CampaignReport rep = c.Run();
  EXPECT_EQ(rep.stats.execs, 0u);
  EXPECT_EQ(rep.corpus_size, 2u);
  EXPECT_EQ(rep.stats.dry_run_execs, 2u);
  EXPECT_EQ(rep.stats.calibration_execs, 2u * 4u);
  ASSERT_TRUE(rep.calibration.has_value());
  EXPECT_GE(rep.epsilon, 5u);
  EXPECT_EQ(rep.states, 6u);
  EXPECT_EQ(StatsRecords(dir).size(), 2u);
  for (const char* f : {"ipsm.json", "registry.json", "calibration.json", "report.json", "ipsm-0.dot",
                        "queue/id_0.safl", "queue/id_1.safl"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  EXPECT_EQ(ReadSaflFile(dir / "queue/id_0.safl"), c.corpus()[0].input);
  std::filesystem::remove_all(dir);
}

TEST(Campaign, DryRunDropsCrashingSeeds) {
  std::vector<FuzzInput> seeds = Seeds("mini-ftp");
  seeds.push_back(testing_support::Ftp({"USER a", "PASS b", "PORT 1,2,3,4,5,6", "STOR " + std::string(99, 'x')}));
  CampaignConfig cfg;
  cfg.max_execs = 0;
  Campaign c(MiniFtpTarget(), seeds, cfg);
  EXPECT_EQ(c.Run().corpus_size, 2u);
  EXPECT_THROW(Campaign(MiniFtpTarget(), {seeds.back()}, cfg).Run(), CampaignError);
}

TEST(Campaign, AnalysisOnlyForNewCoverage) {
  CampaignConfig cfg;
  cfg.max_execs = 3000;
  cfg.rng_seed = 5;
  Campaign c(MiniFtpTarget(), Seeds("mini-ftp"), cfg);
  const CampaignReport rep = c.Run();
  EXPECT_EQ(rep.stats.execs, 3000u);
  EXPECT_GT(rep.stats.new_coverage_execs, 0u);
  EXPECT_EQ(rep.stats.analysis_execs, rep.stats.new_coverage_execs);
  EXPECT_EQ(rep.corpus_size, 2u + rep.stats.new_coverage_execs);
  EXPECT_GT(rep.stats.deterministic_mutants, 0u);
}

TEST(Campaign, StatelessNeverAnalyses) {
  CampaignConfig cfg;
  cfg.mode = FuzzMode::kStateless;
  cfg.max_execs = 2000;
  Campaign c(MiniFtpTarget(), Seeds("mini-ftp"), cfg);
  const CampaignReport rep = c.Run();
  EXPECT_EQ(rep.stats.analysis_execs, 0u);
  EXPECT_EQ(rep.states, 1u);
  EXPECT_EQ(rep.stats.calibration_execs, 2u);
  EXPECT_FALSE(rep.calibration.has_value());
}

TEST(Campaign, ResponseCodeModeUsesCodes) {
  CampaignConfig cfg;
  cfg.mode = FuzzMode::kResponseCode;
  cfg.max_execs = 0;
  Campaign c(MiniFtpTarget(), Seeds("mini-ftp"), cfg);
  const CampaignReport rep = c.Run();
  std::set<uint32_t> codes;
  Executor ex(MiniFtpTarget(), {});
  for (const auto& s : Seeds("mini-ftp")) {
    for (const auto& code : ex.Run(s, false).response_codes) {
      if (code) codes.insert(*code);
    }
  }
  EXPECT_EQ(rep.states, codes.size() + 1);
  EXPECT_EQ(c.registry().count(), 0u);
}

TEST(Campaign, CrashesAreDeduplicated) {
  CampaignConfig cfg;
  cfg.max_execs = 0;
  Campaign c(MiniFtpTarget(), Seeds("mini-ftp"), cfg);
  c.Run();
  const FuzzInput a = testing_support::Ftp({"USER a", "PASS b", "PORT 1,2,3,4,5,6", "STOR " + std::string(70, 'x')});
  const FuzzInput b = testing_support::Ftp({"USER c", "PASS d", "PORT 9,9,9,9,9,9", "STOR " + std::string(90, 'y')});
  c.ExecuteAndProcess(a, std::nullopt);
  c.ExecuteAndProcess(b, std::nullopt);
  ASSERT_EQ(c.crashes().size(), 1u);
  const CrashReport& cr = c.crashes().begin()->second;
  EXPECT_EQ(cr.hits, 2u);
  EXPECT_EQ(cr.input, a);
  EXPECT_FALSE(cr.flaky);
  EXPECT_EQ(c.stats().crash_execs, 2u);
  EXPECT_EQ(c.stats().replay_execs, 1u);
  EXPECT_EQ(c.stats().first_crash_at, 1u);
}

TEST(Campaign, FlakyCrashIsQuarantined) {
  const auto dir = testing_support::ScratchDir("flaky");
  CampaignConfig cfg;
  cfg.max_execs = 0;
  cfg.out_dir = dir;
  Campaign c(FlakyTarget(), {Raw({"hello"})}, cfg);
  c.Run();
  // Instance parity depends on how many runs happened; try until one crashes.
  for (int i = 0; i < 2 && c.crashes().empty(); ++i) c.ExecuteAndProcess(Raw({"boom"}), std::nullopt);
  ASSERT_EQ(c.crashes().size(), 1u);
  const CrashReport& cr = c.crashes().begin()->second;
  EXPECT_TRUE(cr.flaky);
  EXPECT_TRUE(std::filesystem::exists(dir / "crashes" / ("flaky-" + cr.group_key)));
  EXPECT_FALSE(c.stats().first_crash_at.has_value());
  std::filesystem::remove_all(dir);
}

TEST(Campaign, FindsDeepBugAndStops) {
  CampaignConfig cfg;
  cfg.max_execs = 200000;
  cfg.rng_seed = 1;
  cfg.skip_deterministic = true;
  cfg.stop_on_first_crash = true;
  Campaign c(MiniFtpTarget(), Seeds("mini-ftp"), cfg);
  const CampaignReport rep = c.Run();
  ASSERT_EQ(rep.crashes_unique, 1u);
  EXPECT_EQ(rep.stats.first_crash_at, rep.stats.execs);
  EXPECT_EQ(c.crashes().begin()->second.bug_id, 1u);
  EXPECT_LT(rep.stats.execs, 200000u);
}

TEST(Campaign, StopFlagEndsTheLoop) {
  std::atomic<bool> stop{true};
  CampaignConfig cfg;
  cfg.stop_flag = &stop;
  Campaign c(EchoTarget(), Seeds("echo"), cfg);
  EXPECT_EQ(c.Run().stats.execs, 0u);
}

TEST(Campaign, ReproducibleWithExecCheckpoints) {
  std::vector<std::vector<nlohmann::json>> stats;
  std::vector<std::string> ipsms;
  std::vector<std::vector<FuzzInput>> corpora;
  for (int round = 0; round < 2; ++round) {
    const auto dir = testing_support::ScratchDir("repro" + std::to_string(round));
    CampaignConfig cfg;
    cfg.max_execs = 4000;
    cfg.rng_seed = 77;
    cfg.stats_every_execs = 500;
    cfg.out_dir = dir;
    Campaign c(MiniFtpTarget(), Seeds("mini-ftp"), cfg);
    c.Run();
    stats.push_back(StatsRecords(dir));
    ipsms.push_back(testing_support::ReadText(dir / "ipsm.json"));
    std::vector<FuzzInput> corpus;
    for (const auto& e : c.corpus()) corpus.push_back(e.input);
    corpora.push_back(corpus);
    std::filesystem::remove_all(dir);
  }
  EXPECT_EQ(stats[0].size(), 4000u / 500u + 2u);
  EXPECT_EQ(stats[0], stats[1]);
  EXPECT_EQ(ipsms[0], ipsms[1]);
  EXPECT_EQ(corpora[0], corpora[1]);
}

TEST(Campaign, EchoCollapsesToTwoStates) {
  CampaignConfig cfg;
  cfg.max_execs = 3000;
  Campaign c(EchoTarget(), Seeds("echo"), cfg);
  EXPECT_EQ(c.Run().states, 2u);
}

TEST(Campaign, ReportJson) {
  CampaignConfig cfg;
  cfg.max_execs = 100;
  Campaign c(EchoTarget(), Seeds("echo"), cfg);
  const CampaignReport rep = c.Run();
  const nlohmann::json j = rep.ToJson();
  EXPECT_EQ(j["execs"], 100);
  EXPECT_TRUE(j["first_crash_at"].is_null());
  EXPECT_NE(rep.SummaryLine().find("execs=100"), std::string::npos);
}
