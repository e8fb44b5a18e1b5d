#pragma once

// Runs one fuzz input as one session against a fresh target instance, over
// either a direct in-process channel or a TCP loopback connection.
//
// TCP wire format, both directions: u32 LE length | payload, one frame per
// message. The server flushes all replies to one request in a single write;
// the client waits up to the reply timeout for the first frame and then
// drains whatever is already buffered.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "statefuzz/input.h"
#include "statefuzz/runtime.h"
#include "statefuzz/target.h"

namespace statefuzz {

enum class ChannelKind : uint8_t { kInProcess, kTcpLoopback };
std::string_view ChannelName(ChannelKind kind);
std::optional<ChannelKind> ParseChannel(std::string_view name);

enum class Outcome : uint8_t { kOk, kCrash, kHang };
std::string_view OutcomeName(Outcome o);

struct ExecOptions {
  ChannelKind channel = ChannelKind::kInProcess;
  std::chrono::milliseconds reply_timeout{50};
  std::chrono::milliseconds hang_timeout{1000};
  bool trace = false;
  RuntimeOptions runtime;  // `snapshots` is overridden per run
};

struct CrashInfo {
  uint32_t bug_id = 0;
  std::string site;
  std::string group_key;
};

struct ExecResult {
  Outcome outcome = Outcome::kOk;
  std::optional<CrashInfo> crash;
  bool channel_failure = false;

  std::vector<Bytes> banner;               // replies sent before the first request
  std::vector<std::vector<Bytes>> replies;  // per delivered message
  // Iterations completed once each delivered message was handled.
  std::vector<int64_t> iterations_after;
  int64_t total_iterations = 0;
  size_t messages_delivered = 0;

  // Filled when analysis ran: one entry per iteration.
  std::vector<std::optional<TlshDigest>> digests;
  bool analyzed = false;
  // Code of each iteration-closing reply (targets with a code extractor).
  std::vector<std::optional<uint32_t>> response_codes;
  std::vector<std::string> trace;
  std::chrono::nanoseconds elapsed{0};
};

// Post-message state of each delivered message, given the per-iteration
// states: the state reached by the last iteration completed so far.
std::vector<StateId> MessageStates(const ExecResult& r, const StateSequence& iteration_states);

class Executor {
 public:
  Executor(TargetSpec spec, ExecOptions options);
  ~Executor();
  Executor(const Executor&) = delete;
  Executor& operator=(const Executor&) = delete;

  // With `analysis`, snapshots are taken and per-iteration digests returned.
  ExecResult Run(const FuzzInput& input, bool analysis);

  // Raw hit counters of the last run (kCoverageMapSize bytes).
  std::span<uint8_t> coverage() { return coverage_; }
  const TargetSpec& spec() const { return spec_; }
  const ExecOptions& options() const { return options_; }

 private:
  ExecResult RunInProcess(const FuzzInput& input, bool analysis);
  ExecResult RunTcp(const FuzzInput& input, bool analysis);

  TargetSpec spec_;
  ExecOptions options_;
  std::vector<uint8_t> coverage_;
  int listen_fd_ = -1;
  uint16_t listen_port_ = 0;
};

}  // namespace statefuzz
