#include "statefuzz/engine.h"

#include <algorithm>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace statefuzz {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

std::string_view ModeName(FuzzMode mode) {
  switch (mode) {
    case FuzzMode::kStateful: return "stateful";
    case FuzzMode::kStateless: return "stateless";
    case FuzzMode::kResponseCode: return "response-code";
  }
  return "?";
}

std::optional<FuzzMode> ParseMode(std::string_view name) {
  if (name == "stateful") return FuzzMode::kStateful;
  if (name == "stateless") return FuzzMode::kStateless;
  if (name == "response-code") return FuzzMode::kResponseCode;
  return std::nullopt;
}

CoverageTracker::CoverageTracker() : virgin_(kCoverageMapSize, 0xFF) {}

kernels::NewBits CoverageTracker::Update(std::span<uint8_t> trace) {
  const auto& k = kernels::Active();
  k.classify_counts(trace);
  return k.update_virgin(trace, virgin_);
}

size_t CoverageTracker::edges_seen() const {
  return static_cast<size_t>(std::count_if(virgin_.begin(), virgin_.end(),
                                           [](uint8_t v) { return v != 0xFF; }));
}

nlohmann::json CampaignReport::ToJson() const {
  nlohmann::json j = {
      {"execs", stats.execs},
      {"dry_run_execs", stats.dry_run_execs},
      {"calibration_execs", stats.calibration_execs},
      {"analysis_execs", stats.analysis_execs},
      {"replay_execs", stats.replay_execs},
      {"new_coverage_execs", stats.new_coverage_execs},
      {"crash_execs", stats.crash_execs},
      {"hang_execs", stats.hang_execs},
      {"nondeterministic_entries", stats.nondeterministic_entries},
      {"deterministic_mutants", stats.deterministic_mutants},
      {"havoc_mutants", stats.havoc_mutants},
      {"fuzz_seconds", std::chrono::duration<double>(stats.fuzz_time).count()},
      {"analysis_seconds", std::chrono::duration<double>(stats.analysis_time).count()},
      {"elapsed_seconds", std::chrono::duration<double>(stats.elapsed).count()},
      {"corpus", corpus_size},
      {"states", states},
      {"transitions", transitions},
      {"crashes_unique", crashes_unique},
      {"crashes_flaky", crashes_flaky},
      {"crash_keys", crash_keys},
      {"epsilon", epsilon},
  };
  j["first_crash_at"] = stats.first_crash_at ? nlohmann::json(*stats.first_crash_at) : nlohmann::json();
  return j;
}

std::string CampaignReport::SummaryLine() const {
  return fmt::format(
      "result=done execs={} corpus={} states={} transitions={} crashes_unique={} "
      "crashes_flaky={} epsilon={} first_crash_at={}",
      stats.execs, corpus_size, states, transitions, crashes_unique, crashes_flaky, epsilon,
      stats.first_crash_at ? std::to_string(*stats.first_crash_at) : "none");
}

Campaign::Campaign(TargetSpec target, std::vector<FuzzInput> seeds, CampaignConfig cfg)
    : target_(std::move(target)),
      seeds_(std::move(seeds)),
      cfg_(std::move(cfg)),
      executor_(target_, cfg_.exec),
      rng_(cfg_.rng_seed),
      kernels_(kernels::Active()) {
  if (seeds_.empty()) throw CampaignError("no seed inputs");
  if (cfg_.mode == FuzzMode::kResponseCode && !target_.supports_response_codes) {
    throw CampaignError(fmt::format("target {} lacks response codes", target_.name));
  }
  eps_.epsilon = cfg_.calibration.eps_min;
}

Campaign::~Campaign() = default;

bool Campaign::BudgetLeft() const {
  if (stop_) return false;
  if (cfg_.stop_flag != nullptr && cfg_.stop_flag->load(std::memory_order_relaxed)) return false;
  if (cfg_.max_execs && stats_.execs >= *cfg_.max_execs) return false;
  if (cfg_.max_time && Clock::now() - loop_start_ >= *cfg_.max_time) return false;
  return true;
}

CampaignReport Campaign::Run() {
  start_ = Clock::now();
  if (!cfg_.out_dir.empty()) {
    fs::create_directories(cfg_.out_dir / "queue");
    fs::create_directories(cfg_.out_dir / "crashes");
    stats_out_.open(cfg_.out_dir / "stats.jsonl", std::ios::trunc);
  }
  DryRun();
  CalibrateAndSeed();
  loop_start_ = Clock::now();
  last_stats_ = loop_start_;
  next_stats_execs_ = cfg_.stats_every_execs;
  MaybeWriteStats(true);
  MainLoop();
  stats_.elapsed = Clock::now() - start_;
  MaybeWriteStats(true);
  WriteArtifacts();
  return MakeReport();
}

void Campaign::DryRun() {
  std::vector<FuzzInput> kept;
  for (size_t i = 0; i < seeds_.size(); ++i) {
    ExecResult r = executor_.Run(seeds_[i], false);
    ++stats_.dry_run_execs;
    if (r.outcome != Outcome::kOk) {
      spdlog::warn("seed {} rejected: {}{}", i, OutcomeName(r.outcome),
                   r.crash ? " (" + r.crash->group_key + ")" : "");
      continue;
    }
    auto trace = executor_.coverage();
    coverage_.Update(trace);
    seed_signatures_.push_back(kernels_.coverage_hash(trace));
    kept.push_back(std::move(seeds_[i]));
  }
  if (kept.empty()) throw CampaignError("all seeds rejected by the dry run");
  seeds_ = std::move(kept);
}

StateSequence Campaign::StatesOf(const ExecResult& r) {
  switch (cfg_.mode) {
    case FuzzMode::kStateful:
      return MapDigestsToStates(r.digests, registry_, eps_.epsilon);
    case FuzzMode::kResponseCode: {
      StateSequence seq;
      for (const auto& code : r.response_codes) {
        if (!code) {
          seq.push_back(kInitialState);
          continue;
        }
        auto [it, fresh] = code_states_.try_emplace(*code, static_cast<StateId>(code_states_.size() + 1));
        seq.push_back(it->second);
      }
      return seq;
    }
    case FuzzMode::kStateless:
      break;
  }
  return {};
}

void Campaign::CalibrateAndSeed() {
  std::vector<ExecResult> references(seeds_.size());
  if (cfg_.mode == FuzzMode::kStateful) {
    size_t call = 0;
    const size_t per_seed = 1 + static_cast<size_t>(std::max(cfg_.calibration.repetitions, 0));
    auto runner = [&](const FuzzInput& in) {
      ExecResult r = executor_.Run(in, true);
      ++stats_.calibration_execs;
      DigestSequence d = r.digests;
      if (call % per_seed == 0) references[call / per_seed] = std::move(r);
      ++call;
      return d;
    };
    calibration_ = Calibrate(seeds_, runner, cfg_.calibration);
    eps_.epsilon = cfg_.epsilon_override.value_or(calibration_->epsilon);
    spdlog::info("calibration: epsilon {} (pool {}, raw percentile {})", eps_.epsilon,
                 calibration_->pool.size(), calibration_->raw_percentile);
  } else {
    for (size_t i = 0; i < seeds_.size(); ++i) {
      references[i] = executor_.Run(seeds_[i], cfg_.mode == FuzzMode::kResponseCode);
      ++stats_.calibration_execs;
    }
    if (cfg_.epsilon_override) eps_.epsilon = *cfg_.epsilon_override;
  }

  for (size_t i = 0; i < seeds_.size(); ++i) {
    CorpusEntry e;
    e.id = static_cast<InputId>(corpus_.size());
    e.input = seeds_[i];
    e.from_seed = true;
    e.exec_time = references[i].elapsed;
    if (cfg_.mode != FuzzMode::kStateless) {
      e.state_seq = StatesOf(references[i]);
      e.message_states = MessageStates(references[i], e.state_seq);
      ipsm_.IngestSequence(e.id, e.state_seq, true);
    }
    e.cov_signature = seed_signatures_[i];
    SaveEntry(std::move(e));
  }
}

void Campaign::SaveEntry(CorpusEntry entry) {
  if (!cfg_.out_dir.empty()) {
    WriteSaflFile(cfg_.out_dir / "queue" / fmt::format("id_{}.safl", entry.id), entry.input);
  }
  corpus_inputs_.push_back(entry.input);
  corpus_.push_back(std::move(entry));
}

void Campaign::ExecuteAndProcess(const FuzzInput& mutant, std::optional<StateId> targeted) {
  ExecResult r = executor_.Run(mutant, false);
  ++stats_.execs;
  stats_.fuzz_time += r.elapsed;
  if (targeted) ipsm_.RecordFuzz(*targeted);
  auto trace = executor_.coverage();
  const kernels::NewBits fresh = coverage_.Update(trace);

  if (r.outcome == Outcome::kCrash) {
    ++stats_.crash_execs;
    HandleCrash(mutant, r);
  } else if (r.outcome == Outcome::kHang) {
    ++stats_.hang_execs;
  } else if (fresh != kernels::NewBits::kNone) {
    ++stats_.new_coverage_execs;
    CorpusEntry e;
    e.id = static_cast<InputId>(corpus_.size());
    e.input = mutant;
    e.cov_signature = kernels_.coverage_hash(trace);
    e.exec_time = r.elapsed;
    e.found_at = stats_.execs;
    if (cfg_.mode != FuzzMode::kStateless) {
      // Only now pay for snapshots: re-run the input with analysis on.
      ExecResult a = executor_.Run(mutant, true);
      ++stats_.analysis_execs;
      stats_.analysis_time += a.elapsed;
      auto again = executor_.coverage();
      kernels_.classify_counts(again);
      if (kernels_.coverage_hash(again) != e.cov_signature) {
        e.nondeterministic = true;
        ++stats_.nondeterministic_entries;
        spdlog::debug("input {} diverged between runs", e.id);
      }
      e.state_seq = StatesOf(a);
      e.message_states = MessageStates(a, e.state_seq);
      const auto added = ipsm_.IngestSequence(e.id, e.state_seq, true);
      if (cfg_.mode == FuzzMode::kStateful) {
        eps_ = ObserveInputResult(eps_, !added.empty(), cfg_.calibration);
      }
    }
    if (targeted) ipsm_.RecordPath(*targeted);
    SaveEntry(std::move(e));
  }
  MaybeWriteStats(false);
}

void Campaign::HandleCrash(const FuzzInput& input, const ExecResult& r) {
  const std::string& key = r.crash->group_key;
  if (auto it = crashes_.find(key); it != crashes_.end()) {
    ++it->second.hits;
    return;
  }
  CrashReport cr;
  cr.group_key = key;
  cr.bug_id = r.crash->bug_id;
  cr.site = r.crash->site;
  cr.input = input;
  cr.reproducer_id = next_crash_id_++;
  cr.hits = 1;
  cr.found_at = stats_.execs;
  if (cfg_.replay_crashes) {
    ExecResult again = executor_.Run(input, false);
    ++stats_.replay_execs;
    cr.flaky = !(again.outcome == Outcome::kCrash && again.crash && again.crash->group_key == key);
    if (cr.flaky) spdlog::warn("crash {} did not reproduce; quarantined", key);
  }
  if (!cfg_.out_dir.empty()) {
    const fs::path dir = cfg_.out_dir / "crashes" / (cr.flaky ? "flaky-" + key : key);
    fs::create_directories(dir);
    WriteSaflFile(dir / fmt::format("id_{}.safl", cr.reproducer_id), input);
  }
  if (!cr.flaky) {
    spdlog::info("new crash {} at exec {}", key, stats_.execs);
    if (!stats_.first_crash_at) stats_.first_crash_at = stats_.execs;
    if (cfg_.stop_on_first_crash) stop_ = true;
  }
  crashes_.emplace(key, std::move(cr));
}

void Campaign::FuzzOne(InputId id, const FuzzInput& input, size_t msg_idx,
                       std::optional<StateId> targeted) {
  auto tag = [&](FuzzInput& m) {
    m.provenance.parent_id = id;
    m.provenance.state_targeted = targeted ? static_cast<int64_t>(*targeted) : -1;
  };

  if (!cfg_.skip_deterministic && msg_idx < input.messages.size() &&
      deterministic_done_.insert({id, msg_idx}).second) {
    // Donors are copied: saving entries during the pass grows the corpus.
    const size_t n = std::min(kMaxSpliceDonors, corpus_inputs_.size());
    const size_t first = RandBelow(rng_, corpus_inputs_.size() - n + 1);
    std::vector<FuzzInput> donors(corpus_inputs_.begin() + static_cast<std::ptrdiff_t>(first),
                                  corpus_inputs_.begin() + static_cast<std::ptrdiff_t>(first + n));
    DeterministicPass(input, msg_idx, cfg_.dictionary, donors, [&](DetStage, FuzzInput&& m) {
      if (!BudgetLeft()) return false;
      tag(m);
      ++stats_.deterministic_mutants;
      ExecuteAndProcess(m, targeted);
      return true;
    });
  }

  for (size_t i = 0; i < cfg_.havoc_batch && BudgetLeft(); ++i) {
    FuzzInput m = StackedMutation(input, msg_idx, corpus_inputs_, cfg_.dictionary, rng_, cfg_.mutation);
    tag(m);
    ++stats_.havoc_mutants;
    ExecuteAndProcess(m, targeted);
  }
}

void Campaign::MainLoop() {
  auto lookup = [this](InputId id) -> const std::vector<StateId>* {
    if (id < 0 || static_cast<size_t>(id) >= corpus_.size()) return nullptr;
    return &corpus_[static_cast<size_t>(id)].message_states;
  };
  while (BudgetLeft()) {
    if (cfg_.mode == FuzzMode::kStateless) {
      const size_t k = queue_cursor_++ % corpus_.size();
      const FuzzInput input = corpus_[k].input;
      const size_t n = input.messages.size();
      const size_t pos = n == 0 ? 0 : RandBelow(rng_, n);
      FuzzOne(corpus_[k].id, input, pos, std::nullopt);
      continue;
    }
    const StateId s = ipsm_.SelectState(rng_);
    Ipsm::Pick pick;
    try {
      pick = ipsm_.PickInputAndPosition(s, rng_, lookup);
    } catch (const StaleCorpusError& e) {
      spdlog::debug("{}", e.what());
      continue;
    }
    const FuzzInput input = corpus_[static_cast<size_t>(pick.input_id)].input;
    FuzzOne(pick.input_id, input, pick.message_index, s);
  }
}

void Campaign::MaybeWriteStats(bool force) {
  const auto now = Clock::now();
  bool due = force;
  if (!due && cfg_.stats_every_execs > 0) {
    due = stats_.execs >= next_stats_execs_;
  } else if (!due) {
    due = now - last_stats_ >= cfg_.stats_interval;
  }
  if (!due) return;
  last_stats_ = now;
  if (cfg_.stats_every_execs > 0) {
    while (next_stats_execs_ <= stats_.execs) next_stats_execs_ += cfg_.stats_every_execs;
  }
  if (!stats_out_.is_open()) return;
  const double loop_s = std::chrono::duration<double>(now - loop_start_).count();
  const nlohmann::json rec = {
      {"t", std::chrono::duration<double>(now - start_).count()},
      {"execs", stats_.execs},
      {"execs_per_sec", loop_s > 0 ? static_cast<double>(stats_.execs) / loop_s : 0.0},
      {"corpus", corpus_.size()},
      {"states", ipsm_.state_count()},
      {"transitions", ipsm_.transition_count()},
      {"crashes_unique", MakeReport().crashes_unique},
      {"epsilon", eps_.epsilon},
  };
  stats_out_ << rec.dump() << '\n';
  stats_out_.flush();
}

CampaignReport Campaign::MakeReport() const {
  CampaignReport rep;
  rep.stats = stats_;
  rep.corpus_size = corpus_.size();
  rep.states = ipsm_.state_count();
  rep.transitions = ipsm_.transition_count();
  for (const auto& [key, cr] : crashes_) {
    if (cr.flaky) {
      ++rep.crashes_flaky;
    } else {
      ++rep.crashes_unique;
      rep.crash_keys.push_back(key);
    }
  }
  rep.epsilon = eps_.epsilon;
  rep.calibration = calibration_;
  return rep;
}

void Campaign::WriteArtifacts() {
  if (cfg_.out_dir.empty()) return;
  auto write = [&](const fs::path& name, const std::string& text) {
    std::ofstream out(cfg_.out_dir / name, std::ios::trunc);
    out << text;
  };
  write(fmt::format("ipsm-{}.dot", stats_.execs), ipsm_.ToDot());
  write("ipsm.json", ipsm_.ToJson().dump(2) + "\n");
  write("registry.json", registry_.ToJson().dump(2) + "\n");
  if (calibration_) write("calibration.json", calibration_->ToJson().dump(2) + "\n");
  nlohmann::json report = MakeReport().ToJson();
  report["target"] = target_.name;
  report["mode"] = ModeName(cfg_.mode);
  report["rng_seed"] = cfg_.rng_seed;
  write("report.json", report.dump(2) + "\n");
}

}  // namespace statefuzz
