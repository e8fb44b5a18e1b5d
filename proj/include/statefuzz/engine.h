#pragma once

// Campaign orchestration: seed dry run, calibration, the state-guided main
// loop, coverage feedback, lazy state analysis and crash bookkeeping.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "statefuzz/calibration.h"
#include "statefuzz/executor.h"
#include "statefuzz/ipsm.h"
#include "statefuzz/kernels.h"
#include "statefuzz/mutation.h"
#include "statefuzz/mvp_index.h"
#include "statefuzz/rng.h"

namespace statefuzz {

enum class FuzzMode : uint8_t { kStateful, kStateless, kResponseCode };
std::string_view ModeName(FuzzMode mode);
std::optional<FuzzMode> ParseMode(std::string_view name);

class CampaignError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bucketed edge map plus the virgin map of bits never seen so far.
class CoverageTracker {
 public:
  CoverageTracker();
  // Buckets `trace` in place and folds it into the virgin map.
  kernels::NewBits Update(std::span<uint8_t> trace);
  size_t edges_seen() const;
  std::span<const uint8_t> virgin() const { return virgin_; }

 private:
  std::vector<uint8_t> virgin_;
};

struct CampaignConfig {
  FuzzMode mode = FuzzMode::kStateful;
  std::optional<uint64_t> max_execs;  // fuzzing executions, calibration excluded
  std::optional<std::chrono::milliseconds> max_time;
  uint64_t rng_seed = 1;
  std::optional<uint32_t> epsilon_override;
  CalibrationConfig calibration;
  MutationConfig mutation;
  Dictionary dictionary;
  ExecOptions exec;
  bool skip_deterministic = false;
  size_t havoc_batch = 128;  // stacked mutants per selection
  bool stop_on_first_crash = false;
  bool replay_crashes = true;
  const std::atomic<bool>* stop_flag = nullptr;  // set from a signal handler

  std::filesystem::path out_dir;  // empty: keep everything in memory
  std::chrono::milliseconds stats_interval{5000};
  // When non-zero, stats are written every this many executions instead of
  // on the wall clock, which makes stats.jsonl reproducible.
  uint64_t stats_every_execs = 0;
};

struct CorpusEntry {
  InputId id = 0;
  FuzzInput input;
  StateSequence state_seq;           // per iteration, from the analysis run
  std::vector<StateId> message_states;  // post-message state of each delivered message
  uint64_t cov_signature = 0;
  std::chrono::nanoseconds exec_time{0};
  uint64_t found_at = 0;  // fuzzing executions when saved
  bool from_seed = false;
  bool nondeterministic = false;
};

struct CrashReport {
  std::string group_key;
  uint32_t bug_id = 0;
  std::string site;
  FuzzInput input;  // first reproducer
  InputId reproducer_id = 0;
  uint64_t hits = 0;
  uint64_t found_at = 0;
  bool flaky = false;
};

struct CampaignStats {
  uint64_t execs = 0;  // fuzzing executions (mutants)
  uint64_t dry_run_execs = 0;
  uint64_t calibration_execs = 0;
  uint64_t analysis_execs = 0;  // lazy re-executions with snapshots
  uint64_t replay_execs = 0;
  uint64_t new_coverage_execs = 0;  // ok executions that found new coverage
  uint64_t crash_execs = 0;
  uint64_t hang_execs = 0;
  uint64_t nondeterministic_entries = 0;
  uint64_t deterministic_mutants = 0;
  uint64_t havoc_mutants = 0;
  std::chrono::nanoseconds fuzz_time{0};       // wall time of fuzzing executions
  std::chrono::nanoseconds analysis_time{0};
  std::chrono::nanoseconds elapsed{0};
  std::optional<uint64_t> first_crash_at;
};

struct CampaignReport {
  CampaignStats stats;
  size_t corpus_size = 0;
  size_t states = 0;
  size_t transitions = 0;
  size_t crashes_unique = 0;
  size_t crashes_flaky = 0;
  uint32_t epsilon = 0;
  std::optional<CalibrationResult> calibration;
  std::vector<std::string> crash_keys;

  nlohmann::json ToJson() const;
  std::string SummaryLine() const;
};

class Campaign {
 public:
  Campaign(TargetSpec target, std::vector<FuzzInput> seeds, CampaignConfig cfg);
  ~Campaign();

  CampaignReport Run();

  const Ipsm& ipsm() const { return ipsm_; }
  const StateRegistry& registry() const { return registry_; }
  const std::vector<CorpusEntry>& corpus() const { return corpus_; }
  const std::map<std::string, CrashReport>& crashes() const { return crashes_; }
  const CampaignStats& stats() const { return stats_; }
  const CoverageTracker& coverage() const { return coverage_; }
  uint32_t epsilon() const { return eps_.epsilon; }
  const CampaignConfig& config() const { return cfg_; }

  // Runs one mutant through execution and verdict processing, as the main
  // loop does. `targeted` is the state being fuzzed, if any.
  void ExecuteAndProcess(const FuzzInput& mutant, std::optional<StateId> targeted);
  // State ids of one analysed execution under the campaign's mode.
  StateSequence StatesOf(const ExecResult& r);

 private:
  void DryRun();
  void CalibrateAndSeed();
  void MainLoop();
  void FuzzOne(InputId id, const FuzzInput& input, size_t msg_idx, std::optional<StateId> targeted);
  bool BudgetLeft() const;
  void SaveEntry(CorpusEntry entry);
  void HandleCrash(const FuzzInput& input, const ExecResult& r);
  void MaybeWriteStats(bool force);
  void WriteArtifacts();
  CampaignReport MakeReport() const;

  TargetSpec target_;
  std::vector<FuzzInput> seeds_;
  std::vector<uint64_t> seed_signatures_;  // dry-run coverage of kept seeds
  CampaignConfig cfg_;
  Executor executor_;
  Rng rng_;
  const kernels::KernelTable& kernels_;

  CoverageTracker coverage_;
  StateRegistry registry_;
  Ipsm ipsm_;
  EpsilonState eps_;
  std::map<uint32_t, StateId> code_states_;  // response-code mode
  std::optional<CalibrationResult> calibration_;

  std::vector<CorpusEntry> corpus_;
  std::vector<FuzzInput> corpus_inputs_;  // same order, for donors
  std::set<std::pair<InputId, size_t>> deterministic_done_;
  size_t queue_cursor_ = 0;
  std::map<std::string, CrashReport> crashes_;
  InputId next_crash_id_ = 0;

  CampaignStats stats_;
  std::chrono::steady_clock::time_point start_;
  std::chrono::steady_clock::time_point loop_start_;
  std::chrono::steady_clock::time_point last_stats_;
  uint64_t next_stats_execs_ = 0;
  std::ofstream stats_out_;
  bool stop_ = false;
};

}  // namespace statefuzz
