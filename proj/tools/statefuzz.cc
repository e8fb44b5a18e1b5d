// statefuzz: command-line front end.
//
//   statefuzz fuzz   --target mini-ftp --seeds seeds/mini-ftp --out out --execs 100000
//   statefuzz replay --target mini-ftp out/crashes/<key>/id_0.safl --trace
//   statefuzz ipsm   --out out --format dot
//
// Exit status: 0 clean, 2 a crash was found (fuzz) or reproduced (replay),
// 1 setup or input error. The last stdout line is always a key=value summary.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <regex>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "statefuzz/engine.h"
#include "statefuzz/executor.h"
#include "statefuzz/input.h"
#include "statefuzz/ipsm.h"
#include "statefuzz/mvp_index.h"
#include "statefuzz/target.h"

namespace fs = std::filesystem;
using namespace statefuzz;

namespace {

std::atomic<bool> g_stop{false};

void OnSignal(int) { g_stop.store(true); }

std::string Quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

int Fail(std::string_view command, std::string_view message) {
  spdlog::error("{}", message);
  fmt::print("statefuzz {} result=error message={}\n", command, Quote(message));
  return 1;
}

// Printable rendering of a reply: text when it is text, hex otherwise.
std::string Render(ByteView b) {
  bool text = true;
  for (uint8_t c : b) {
    if ((c < 0x20 || c > 0x7E) && c != '\r' && c != '\n' && c != '\t') text = false;
  }
  if (!text) return "hex:" + HexEncode(b);
  std::string s(AsString(b));
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

std::string JoinStates(const std::vector<StateId>& states) {
  std::string out;
  for (StateId s : states) out += (out.empty() ? "" : ",") + std::to_string(s);
  return out.empty() ? "-" : out;
}

TargetSpec TargetWithHooks(const std::string& name) {
  TargetSpec spec = MakeTarget(name);
  if (const char* hooks = std::getenv("STATEFUZZ_NET_HOOKS"); hooks != nullptr && *hooks != '\0') {
    spec = ApplyHookList(std::move(spec), hooks);
    spdlog::info("hooks from STATEFUZZ_NET_HOOKS: {}", hooks);
  }
  return spec;
}

struct FuzzArgs {
  std::string target;
  std::string seeds;
  std::string out;
  std::optional<uint64_t> execs;
  std::optional<double> seconds;
  std::string mode = "stateful";
  std::optional<uint32_t> epsilon;
  uint64_t seed = 1;
  std::string channel = "inproc";
  std::string dict;
  int reply_timeout_ms = 50;
  int hang_timeout_ms = 1000;
  bool resume = false;
  bool skip_deterministic = false;
  size_t havoc_batch = 128;
  uint64_t stats_every = 0;
  bool stop_on_crash = false;
};

int CmdFuzz(const FuzzArgs& a) {
  CampaignConfig cfg;
  try {
    TargetSpec spec = TargetWithHooks(a.target);
    auto mode = ParseMode(a.mode);
    if (!mode) return Fail("fuzz", "unknown mode '" + a.mode + "'");
    auto channel = ParseChannel(a.channel);
    if (!channel) return Fail("fuzz", "unknown channel '" + a.channel + "'");
    if (*mode == FuzzMode::kResponseCode && !spec.supports_response_codes) {
      return Fail("fuzz", "target lacks response codes: " + spec.name);
    }
    if (!fs::is_directory(a.seeds)) return Fail("fuzz", "seed directory not found: " + a.seeds);
    std::vector<FuzzInput> seeds = ReadSeedDirectory(a.seeds);
    if (a.resume && fs::is_directory(fs::path(a.out) / "queue")) {
      auto queue = ReadSeedDirectory(fs::path(a.out) / "queue");
      seeds.insert(seeds.end(), queue.begin(), queue.end());
    }
    if (seeds.empty()) return Fail("fuzz", "no .safl seeds in " + a.seeds);
    if (fs::exists(a.out) && !fs::is_empty(a.out) && !a.resume) {
      return Fail("fuzz", "output directory not empty (use --resume): " + a.out);
    }

    cfg.mode = *mode;
    cfg.max_execs = a.execs;
    if (a.seconds) cfg.max_time = std::chrono::milliseconds(static_cast<int64_t>(*a.seconds * 1000));
    cfg.rng_seed = a.seed;
    cfg.epsilon_override = a.epsilon;
    cfg.exec.channel = *channel;
    cfg.exec.reply_timeout = std::chrono::milliseconds(a.reply_timeout_ms);
    cfg.exec.hang_timeout = std::chrono::milliseconds(a.hang_timeout_ms);
    if (!a.dict.empty()) cfg.dictionary = Dictionary::Load(a.dict);
    cfg.skip_deterministic = a.skip_deterministic;
    cfg.havoc_batch = a.havoc_batch;
    cfg.stats_every_execs = a.stats_every;
    cfg.stop_on_first_crash = a.stop_on_crash;
    cfg.out_dir = a.out;
    cfg.stop_flag = &g_stop;

    std::signal(SIGINT, OnSignal);
    std::signal(SIGTERM, OnSignal);
    Campaign campaign(std::move(spec), std::move(seeds), std::move(cfg));
    const CampaignReport rep = campaign.Run();
    fmt::print("statefuzz fuzz target={} mode={} {}\n", a.target, a.mode, rep.SummaryLine());
    return rep.crashes_unique > 0 ? 2 : 0;
  } catch (const std::exception& e) {
    return Fail("fuzz", e.what());
  }
}

int CmdReplay(const std::string& target, const std::string& file, bool trace,
              const std::string& channel_name, uint32_t epsilon, const std::string& registry_path) {
  try {
    TargetSpec spec = TargetWithHooks(target);
    const FuzzInput input = ReadSaflFile(file);
    auto channel = ParseChannel(channel_name);
    if (!channel) return Fail("replay", "unknown channel '" + channel_name + "'");

    StateRegistry registry;
    if (!registry_path.empty()) {
      std::ifstream in(registry_path);
      if (!in) return Fail("replay", "cannot read registry " + registry_path);
      registry = StateRegistry::FromJson(nlohmann::json::parse(in));
    }
    ExecOptions opts;
    opts.channel = *channel;
    opts.trace = trace;
    Executor executor(spec, opts);
    const ExecResult r = executor.Run(input, true);
    const StateSequence states = MapDigestsToStates(r.digests, registry, epsilon);
    const std::vector<StateId> per_message = MessageStates(r, states);

    for (const Bytes& b : r.banner) fmt::print("banner: {}\n", Render(b));
    for (size_t i = 0; i < r.replies.size(); ++i) {
      fmt::print("[{}] > {}\n", i, Render(input.messages[i]));
      for (const Bytes& b : r.replies[i]) fmt::print("[{}] < {}\n", i, Render(b));
      fmt::print("[{}] state {}\n", i, per_message[i]);
    }
    if (trace) {
      for (const std::string& ev : r.trace) fmt::print("hook: {}\n", ev);
    }
    fmt::print("statefuzz replay result={} iterations={} states={} group_key={}\n",
               OutcomeName(r.outcome), r.total_iterations, JoinStates(states),
               r.crash ? r.crash->group_key : "-");
    return r.outcome == Outcome::kCrash ? 2 : 0;
  } catch (const SaflFormatError& e) {
    return Fail("replay", std::string("malformed input: ") + e.what());
  } catch (const std::exception& e) {
    return Fail("replay", e.what());
  }
}

int CmdIpsm(const std::string& out_dir, const std::string& format) {
  const fs::path json_path = fs::path(out_dir) / "ipsm.json";
  if (!fs::exists(json_path)) return Fail("ipsm", "no ipsm.json in " + out_dir);
  try {
    std::ifstream in(json_path);
    const nlohmann::json j = nlohmann::json::parse(in);
    const GraphShape shape = Ipsm::ShapeFromJson(j);
    if (format == "json") {
      fmt::print("{}\n", j.dump(2));
    } else if (format == "dot") {
      // Latest snapshot by execution count in the file name.
      static const std::regex kName(R"(ipsm-(\d+)\.dot)");
      fs::path best;
      uint64_t best_n = 0;
      for (const auto& e : fs::directory_iterator(out_dir)) {
        std::smatch m;
        const std::string name = e.path().filename().string();
        if (std::regex_match(name, m, kName) && (best.empty() || std::stoull(m[1]) >= best_n)) {
          best = e.path();
          best_n = std::stoull(m[1]);
        }
      }
      if (best.empty()) return Fail("ipsm", "no ipsm-*.dot in " + out_dir);
      std::ifstream dot(best);
      std::cout << dot.rdbuf();
    } else {
      return Fail("ipsm", "unknown format '" + format + "'");
    }
    fmt::print("statefuzz ipsm result=ok vertices={} edges={}\n", shape.vertices.size(),
               shape.edges.size());
    return 0;
  } catch (const std::exception& e) {
    return Fail("ipsm", e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("statefuzz"));
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");

  CLI::App app{"Stateful greybox fuzzer for message-oriented servers"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  FuzzArgs fa;
  auto* fuzz = app.add_subcommand("fuzz", "Run a fuzzing campaign");
  fuzz->add_option("--target", fa.target, "Target name")->required();
  fuzz->add_option("--seeds", fa.seeds, "Directory of .safl seed inputs")->required();
  fuzz->add_option("--out", fa.out, "Output directory")->required();
  fuzz->add_option("--execs", fa.execs, "Budget in fuzzing executions");
  fuzz->add_option("--time", fa.seconds, "Budget in seconds");
  fuzz->add_option("--mode", fa.mode, "stateful | stateless | response-code");
  fuzz->add_option("--epsilon", fa.epsilon, "Fixed state-distance threshold (skips calibrated value)");
  fuzz->add_option("--seed", fa.seed, "RNG seed");
  fuzz->add_option("--channel", fa.channel, "inproc | tcp");
  fuzz->add_option("--dict", fa.dict, "Dictionary file");
  fuzz->add_option("--reply-timeout", fa.reply_timeout_ms, "Reply timeout in ms");
  fuzz->add_option("--hang-timeout", fa.hang_timeout_ms, "Session timeout in ms");
  fuzz->add_flag("--resume", fa.resume, "Reuse a non-empty output directory, queue included");
  fuzz->add_flag("--skip-deterministic", fa.skip_deterministic, "Stacked mutations only");
  fuzz->add_option("--havoc-batch", fa.havoc_batch, "Stacked mutants per selection");
  fuzz->add_option("--stats-every", fa.stats_every, "Write stats every N executions");
  fuzz->add_flag("--stop-on-crash", fa.stop_on_crash, "End the campaign at the first crash");

  std::string r_target, r_file, r_channel = "inproc", r_registry;
  bool r_trace = false;
  uint32_t r_epsilon = 5;
  auto* replay = app.add_subcommand("replay", "Execute one input with state analysis");
  replay->add_option("--target", r_target, "Target name")->required();
  replay->add_option("input", r_file, ".safl file")->required();
  replay->add_flag("--trace", r_trace, "Print the hook-event log");
  replay->add_option("--channel", r_channel, "inproc | tcp");
  replay->add_option("--epsilon", r_epsilon, "State-distance threshold");
  replay->add_option("--registry", r_registry, "registry.json of a campaign, for its state ids");

  std::string i_out, i_format = "dot";
  auto* ipsm = app.add_subcommand("ipsm", "Print the inferred state machine of a campaign");
  ipsm->add_option("--out", i_out, "Campaign output directory")->required();
  ipsm->add_option("--format", i_format, "dot | json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    fmt::print("statefuzz result=error message={}\n", Quote(e.what()));
    return 1;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  if (*fuzz) return CmdFuzz(fa);
  if (*replay) return CmdReplay(r_target, r_file, r_trace, r_channel, r_epsilon, r_registry);
  return CmdIpsm(i_out, i_format);
}
