#include "statefuzz/target.h"

#include <algorithm>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace statefuzz {

TargetCrash::TargetCrash(uint32_t bug_id, std::string site)
    : bug_id_(bug_id),
      site_(std::move(site)),
      what_(fmt::format("planted bug {} at {}", bug_id_, site_)) {}

std::string TargetCrash::group_key() const { return fmt::format("b{}-{:08x}", bug_id_, site_hash()); }

const std::vector<std::string>& HookRouter::DefaultReceive() {
  static const std::vector<std::string> kNames = {"recv", "read", "recvfrom", "recvmsg", "fgets",
                                                  "fread"};
  return kNames;
}

const std::vector<std::string>& HookRouter::DefaultSend() {
  static const std::vector<std::string> kNames = {"send", "write", "sendto", "sendmsg", "fprintf",
                                                  "fwrite"};
  return kNames;
}

HookRouter::HookRouter() : receive_(DefaultReceive()), send_(DefaultSend()) {}

HookRouter::HookRouter(std::vector<std::string> receive, std::vector<std::string> send)
    : receive_(std::move(receive)), send_(std::move(send)) {}

HookRole HookRouter::Classify(std::string_view routine) const {
  if (std::find(receive_.begin(), receive_.end(), routine) != receive_.end()) return HookRole::kReceive;
  if (std::find(send_.begin(), send_.end(), routine) != send_.end()) return HookRole::kSend;
  return HookRole::kNone;
}

ServerEnv::ServerEnv(Config config) : cfg_(config) {}

void ServerEnv::Log(std::string event) {
  if (cfg_.trace) trace_.push_back(std::move(event));
}

AreaId ServerEnv::Allocate(size_t size, AreaKind kind) {
  const AreaId id = next_area_++;
  areas_.emplace(id, Bytes(size, 0));
  const bool tracked = cfg_.runtime != nullptr && cfg_.runtime->OnAllocate(id, size, kind);
  if (cfg_.trace) {
    static constexpr const char* kKinds[] = {"heap", "stack", "static"};
    Log(fmt::format("alloc #{} {} {}{}", id, size, kKinds[static_cast<int>(kind)],
                    tracked ? " tracked" : ""));
  }
  return id;
}

void ServerEnv::Free(AreaId id) {
  if (areas_.erase(id) == 0) {
    spdlog::debug("target freed unknown area {}", id);
    return;
  }
  if (cfg_.runtime != nullptr) cfg_.runtime->OnFree(id);
  Log(fmt::format("free #{}", id));
}

std::span<uint8_t> ServerEnv::Mem(AreaId id) { return areas_.at(id); }
ByteView ServerEnv::Mem(AreaId id) const { return areas_.at(id); }

void ServerEnv::Io(std::string_view routine) {
  switch (cfg_.router->Classify(routine)) {
    case HookRole::kReceive:
      if (cfg_.runtime != nullptr) cfg_.runtime->OnReceive();
      prev_site_ = 0;
      Log(fmt::format("on_receive {}", routine));
      break;
    case HookRole::kSend: {
      bool closed = false;
      if (cfg_.runtime != nullptr) {
        closed = cfg_.runtime->OnSend([this](AreaId id) { return ByteView(areas_.at(id)); });
      }
      Log(fmt::format("on_send {}{}", routine, closed ? " closes" : ""));
      break;
    }
    case HookRole::kNone:
      break;
  }
}

void ServerEnv::Reply(std::string_view routine, ByteView data) {
  const int64_t before = cfg_.runtime != nullptr ? cfg_.runtime->current_iter_no() : 0;
  Io(routine);
  if (cfg_.runtime != nullptr && cfg_.runtime->current_iter_no() != before) {
    std::optional<uint32_t> code;
    if (cfg_.response_code != nullptr && *cfg_.response_code) code = (*cfg_.response_code)(data);
    codes_.push_back(code);
  }
  pending_replies_.emplace_back(data.begin(), data.end());
}

void ServerEnv::Cover(uint32_t site) {
  if (cfg_.coverage == nullptr) return;
  uint8_t& cell = cfg_.coverage[(site ^ prev_site_) & (kCoverageMapSize - 1)];
  if (cell != 0xFF) ++cell;
  prev_site_ = site >> 1;
}

void ServerEnv::Crash(uint32_t bug_id, std::string_view site) {
  Log(fmt::format("crash bug {} at {}", bug_id, site));
  throw TargetCrash(bug_id, std::string(site));
}

std::vector<Bytes> ServerEnv::TakeReplies() { return std::exchange(pending_replies_, {}); }

namespace {

std::string AvailableHookPoints(const TargetSpec& spec) {
  std::string out;
  for (const IoRoutine& r : spec.io_routines) {
    if (!out.empty()) out += ", ";
    out += r.name;
  }
  return out;
}

void CheckRoutines(const TargetSpec& spec, const std::vector<std::string>& names) {
  for (const std::string& n : names) {
    const bool known = std::any_of(spec.io_routines.begin(), spec.io_routines.end(),
                                   [&](const IoRoutine& r) { return r.name == n; });
    if (!known) {
      throw std::invalid_argument(fmt::format("target {} has no I/O routine '{}'; available hook points: {}",
                                              spec.name, n, AvailableHookPoints(spec)));
    }
  }
}

}  // namespace

TargetSpec RegisterCustomIoHooks(TargetSpec spec, const std::vector<std::string>& send_fn_names,
                                 const std::vector<std::string>& recv_fn_names) {
  CheckRoutines(spec, send_fn_names);
  CheckRoutines(spec, recv_fn_names);
  std::vector<std::string> recv = recv_fn_names.empty() ? spec.hooks.receive() : recv_fn_names;
  std::vector<std::string> send = send_fn_names.empty() ? spec.hooks.send() : send_fn_names;
  spec.hooks = HookRouter(std::move(recv), std::move(send));
  return spec;
}

TargetSpec ApplyHookList(TargetSpec spec, std::string_view hook_list) {
  std::vector<std::string> send, recv;
  while (!hook_list.empty()) {
    const size_t comma = hook_list.find(',');
    std::string_view item = hook_list.substr(0, comma);
    hook_list = comma == std::string_view::npos ? std::string_view{} : hook_list.substr(comma + 1);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item.empty()) continue;

    if (item.starts_with("send:")) {
      send.emplace_back(item.substr(5));
    } else if (item.starts_with("recv:")) {
      recv.emplace_back(item.substr(5));
    } else {
      auto it = std::find_if(spec.io_routines.begin(), spec.io_routines.end(),
                             [&](const IoRoutine& r) { return r.name == item; });
      if (it == spec.io_routines.end() || it->natural_role == HookRole::kNone) {
        throw std::invalid_argument(
            fmt::format("cannot place hook '{}' on target {}; available hook points: {}", item,
                        spec.name, AvailableHookPoints(spec)));
      }
      (it->natural_role == HookRole::kSend ? send : recv).emplace_back(item);
    }
  }
  return RegisterCustomIoHooks(std::move(spec), send, recv);
}

std::optional<uint32_t> ThreeDigitCode(ByteView reply) {
  if (reply.size() < 3) return std::nullopt;
  uint32_t code = 0;
  for (size_t i = 0; i < 3; ++i) {
    if (reply[i] < '0' || reply[i] > '9') return std::nullopt;
    code = code * 10 + (reply[i] - '0');
  }
  return code;
}

std::vector<std::string> TargetNames() { return {"mini-ftp", "echo", "binproto", "http-toy"}; }

TargetSpec MakeTarget(std::string_view name) {
  if (name == "mini-ftp") return MiniFtpTarget();
  if (name == "echo") return EchoTarget();
  if (name == "binproto") return BinprotoTarget();
  if (name == "http-toy") return HttpToyTarget();
  std::string known;
  for (const auto& n : TargetNames()) known += (known.empty() ? "" : ", ") + n;
  throw std::invalid_argument(fmt::format("unknown target '{}' (known: {})", name, known));
}

}  // namespace statefuzz
