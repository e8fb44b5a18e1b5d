#include "statefuzz/executor.h"

#include <algorithm>
#include <cstring>

#include <spdlog/spdlog.h>

#include "session.h"

namespace statefuzz {

std::string_view ChannelName(ChannelKind kind) {
  return kind == ChannelKind::kInProcess ? "inproc" : "tcp";
}

std::optional<ChannelKind> ParseChannel(std::string_view name) {
  if (name == "inproc" || name == "in-process") return ChannelKind::kInProcess;
  if (name == "tcp" || name == "tcp-loopback") return ChannelKind::kTcpLoopback;
  return std::nullopt;
}

std::string_view OutcomeName(Outcome o) {
  switch (o) {
    case Outcome::kOk: return "ok";
    case Outcome::kCrash: return "crash";
    case Outcome::kHang: return "hang";
  }
  return "?";
}

std::vector<StateId> MessageStates(const ExecResult& r, const StateSequence& iteration_states) {
  std::vector<StateId> out;
  out.reserve(r.iterations_after.size());
  for (int64_t done : r.iterations_after) {
    const auto n = static_cast<size_t>(std::min<int64_t>(done, static_cast<int64_t>(iteration_states.size())));
    out.push_back(n == 0 ? kInitialState : iteration_states[n - 1]);
  }
  return out;
}

Session::Session(const TargetSpec& spec, const ExecOptions& options, bool analysis,
                 uint8_t* coverage)
    : runtime_([&] {
        RuntimeOptions ro = options.runtime;
        ro.snapshots = analysis;
        return ro;
      }()),
      env_(ServerEnv::Config{&spec.hooks, &runtime_, coverage, options.trace,
                             spec.response_code ? &spec.response_code : nullptr}),
      server_(spec.factory()),
      analysis_(analysis) {
  runtime_.OnProcessStart();
}

bool Session::Start(std::vector<Bytes>& replies) {
  try {
    server_->Start(env_);
  } catch (const TargetCrash& c) {
    RecordCrash(c);
  }
  replies = env_.TakeReplies();
  return !crash_;
}

Session::Step Session::Deliver(ByteView message, std::vector<Bytes>& replies) {
  Step step = Step::kAlive;
  try {
    if (!server_->Handle(env_, message)) step = Step::kClosed;
  } catch (const TargetCrash& c) {
    RecordCrash(c);
    step = Step::kCrashed;
  }
  replies = env_.TakeReplies();
  iterations_after_.push_back(runtime_.current_iter_no());
  return step;
}

void Session::RecordCrash(const TargetCrash& c) {
  crash_ = CrashInfo{c.bug_id(), c.site(), c.group_key()};
}

void Session::Finish(ExecResult& r) {
  runtime_.OnProcessEnd();
  r.total_iterations = runtime_.total_iterations();
  r.iterations_after = std::move(iterations_after_);
  r.messages_delivered = r.iterations_after.size();
  if (crash_) {
    r.outcome = Outcome::kCrash;
    r.crash = crash_;
  }
  if (analysis_) {
    r.digests = runtime_.IterationDigests();
    r.analyzed = true;
  }
  r.response_codes = env_.iteration_codes();
  r.trace = env_.trace();
}

Executor::Executor(TargetSpec spec, ExecOptions options)
    : spec_(std::move(spec)), options_(options), coverage_(kCoverageMapSize, 0) {}

ExecResult Executor::Run(const FuzzInput& input, bool analysis) {
  std::fill(coverage_.begin(), coverage_.end(), 0);
  const auto t0 = std::chrono::steady_clock::now();
  ExecResult r = options_.channel == ChannelKind::kInProcess ? RunInProcess(input, analysis)
                                                              : RunTcp(input, analysis);
  r.elapsed = std::chrono::steady_clock::now() - t0;
  return r;
}

// Direct calls: the target's answer (or its silence) is known as soon as the
// handler returns, so a message without reply moves on without waiting.
ExecResult Executor::RunInProcess(const FuzzInput& input, bool analysis) {
  ExecResult r;
  Session session(spec_, options_, analysis, coverage_.data());
  const auto deadline = std::chrono::steady_clock::now() + options_.hang_timeout;
  if (session.Start(r.banner)) {
    for (const Bytes& msg : input.messages) {
      std::vector<Bytes> replies;
      const Session::Step step = session.Deliver(msg, replies);
      r.replies.push_back(std::move(replies));
      if (step != Session::Step::kAlive) break;
      if (std::chrono::steady_clock::now() > deadline) {
        r.outcome = Outcome::kHang;
        break;
      }
    }
  }
  session.Finish(r);
  return r;
}

}  // namespace statefuzz
