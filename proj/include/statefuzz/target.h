#pragma once

// Simulated servers and the hook API they call into. A target models one
// server process handling one client session: it allocates named byte areas
// instead of raw memory, calls I/O routines that the hook router maps onto
// receive/send events, marks control-flow sites for edge coverage, and
// signals planted bugs by raising TargetCrash.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "statefuzz/bytes.h"
#include "statefuzz/runtime.h"

namespace statefuzz {

inline constexpr size_t kCoverageMapSize = 1 << 16;

enum class HookRole : uint8_t { kNone, kReceive, kSend };

// Raised by ServerEnv::Crash; unwinds the target's handler.
class TargetCrash : public std::exception {
 public:
  TargetCrash(uint32_t bug_id, std::string site);
  const char* what() const noexcept override { return what_.c_str(); }

  uint32_t bug_id() const { return bug_id_; }
  const std::string& site() const { return site_; }
  uint32_t site_hash() const { return Fnv1a32(site_); }
  // Dedup key: bug id and site hash, e.g. "b1-3f2a09c1".
  std::string group_key() const;

 private:
  uint32_t bug_id_;
  std::string site_;
  std::string what_;
};

// Which I/O routine names count as receive and send hook points.
class HookRouter {
 public:
  static const std::vector<std::string>& DefaultReceive();
  static const std::vector<std::string>& DefaultSend();

  HookRouter();
  HookRouter(std::vector<std::string> receive, std::vector<std::string> send);

  HookRole Classify(std::string_view routine) const;
  const std::vector<std::string>& receive() const { return receive_; }
  const std::vector<std::string>& send() const { return send_; }

 private:
  std::vector<std::string> receive_;
  std::vector<std::string> send_;
};

using ResponseCodeFn = std::function<std::optional<uint32_t>(ByteView)>;

// The execution environment handed to a target: memory, I/O hooks, coverage.
class ServerEnv {
 public:
  struct Config {
    const HookRouter* router = nullptr;
    Runtime* runtime = nullptr;
    uint8_t* coverage = nullptr;  // kCoverageMapSize hit counters, may be null
    bool trace = false;
    const ResponseCodeFn* response_code = nullptr;
  };

  explicit ServerEnv(Config config);

  // Zero-filled area; ids are handed out sequentially from 1.
  AreaId Allocate(size_t size, AreaKind kind = AreaKind::kHeap);
  void Free(AreaId id);
  std::span<uint8_t> Mem(AreaId id);
  ByteView Mem(AreaId id) const;

  // An I/O call without outgoing payload (reads, polls).
  void Io(std::string_view routine);
  // An I/O call that transmits `data` to the client.
  void Reply(std::string_view routine, ByteView data);
  void Reply(std::string_view routine, std::string_view text) { Reply(routine, ByteView(ToBytes(text))); }

  // Records the edge from the previously covered site to `site`.
  void Cover(uint32_t site);
  [[noreturn]] void Crash(uint32_t bug_id, std::string_view site);

  std::vector<Bytes> TakeReplies();
  const std::vector<std::string>& trace() const { return trace_; }
  // Response code of each iteration-closing reply, in iteration order.
  const std::vector<std::optional<uint32_t>>& iteration_codes() const { return codes_; }

 private:
  void Log(std::string event);

  Config cfg_;
  std::map<AreaId, Bytes> areas_;
  AreaId next_area_ = 1;
  uint32_t prev_site_ = 0;
  std::vector<Bytes> pending_replies_;
  std::vector<std::string> trace_;
  std::vector<std::optional<uint32_t>> codes_;
};

class Server {
 public:
  virtual ~Server() = default;
  // Process start: register long-lived areas, optionally greet.
  virtual void Start(ServerEnv& env) = 0;
  // One request message. Returns false once the session is over.
  virtual bool Handle(ServerEnv& env, ByteView request) = 0;
};

struct PlantedBug {
  uint32_t bug_id = 0;
  std::string trigger;
};

struct IoRoutine {
  std::string name;
  HookRole natural_role = HookRole::kNone;
};

struct TargetSpec {
  std::string name;
  std::function<std::unique_ptr<Server>()> factory;
  bool supports_response_codes = false;
  ResponseCodeFn response_code;
  std::vector<PlantedBug> planted_bugs;
  // Every I/O routine the target calls; these are the available hook points.
  std::vector<IoRoutine> io_routines;
  HookRouter hooks;
};

// Rewires which routines feed the receive/send hooks. An empty list keeps
// the corresponding defaults. Throws std::invalid_argument naming the
// available hook points when a name is not one of the target's routines.
TargetSpec RegisterCustomIoHooks(TargetSpec spec, const std::vector<std::string>& send_fn_names,
                                 const std::vector<std::string>& recv_fn_names);

// Parses a comma-separated hook list ("send:http_reply,recv:http_read", or
// bare names which take the routine's natural direction) and applies it.
TargetSpec ApplyHookList(TargetSpec spec, std::string_view hook_list);

// Leading three ASCII digits of a text reply.
std::optional<uint32_t> ThreeDigitCode(ByteView reply);

TargetSpec MiniFtpTarget();
TargetSpec EchoTarget();
TargetSpec BinprotoTarget();
TargetSpec HttpToyTarget();

std::vector<std::string> TargetNames();
// Throws std::invalid_argument for an unknown name.
TargetSpec MakeTarget(std::string_view name);

}  // namespace statefuzz
