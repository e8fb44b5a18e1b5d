#pragma once

// One target process handling one client session; shared by both channels.

#include <memory>
#include <optional>
#include <vector>

#include "statefuzz/executor.h"

namespace statefuzz {

class Session {
 public:
  enum class Step { kAlive, kClosed, kCrashed };

  Session(const TargetSpec& spec, const ExecOptions& options, bool analysis, uint8_t* coverage);

  // Returns false when the target crashed during startup.
  bool Start(std::vector<Bytes>& replies);
  Step Deliver(ByteView message, std::vector<Bytes>& replies);
  // Ends the process and moves results into `r`.
  void Finish(ExecResult& r);

 private:
  void RecordCrash(const TargetCrash& c);

  Runtime runtime_;
  ServerEnv env_;
  std::unique_ptr<Server> server_;
  bool analysis_;
  std::optional<CrashInfo> crash_;
  std::vector<int64_t> iterations_after_;
};

}  // namespace statefuzz
