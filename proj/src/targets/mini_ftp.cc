// A small FTP-like server. The session context lives in one area allocated at
// startup and carries the login phase, the data-connection endpoint set by
// PORT, the working directory and the last created directory.
//
// Planted bug 1: STOR copies its argument into a 64-byte filename buffer
// without a bounds check. The copy only runs with a logged-in user and a
// pending data connection (PORT), so reaching it takes three prior requests.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstring>

#include "statefuzz/target.h"

namespace statefuzz {
namespace {

constexpr uint32_t Site(std::string_view name) { return Fnv1a32(name); }

// Context layout.
constexpr size_t kCtxSize = 640;
constexpr size_t kCtrlSocket = 0;   // i32
constexpr size_t kDataSocket = 4;   // i32, -1 when closed
constexpr size_t kAuth = 8;         // 0 none, 1 user given, 2 logged in
constexpr size_t kType = 9;         // 'A' or 'I'
constexpr size_t kPortSet = 10;
constexpr size_t kDataAddr = 12;    // 4 address bytes + 2 port bytes
constexpr size_t kDirCount = 20;
constexpr size_t kUser = 32;        // 64 bytes
constexpr size_t kSession = 96;     // 64 bytes, filled at login
constexpr size_t kCwd = 160;        // 128 bytes
constexpr size_t kLastMkd = 288;    // 128 bytes
constexpr size_t kXferBuf = 416;    // 224 bytes of buffer state
constexpr size_t kFieldLen = 128;
constexpr size_t kNameLen = 64;

constexpr size_t kStorBufLen = 64;

enum Auth : uint8_t { kNoAuth = 0, kUserGiven = 1, kLoggedIn = 2 };

void PutField(std::span<uint8_t> ctx, size_t off, size_t cap, std::string_view s) {
  std::fill_n(ctx.begin() + static_cast<std::ptrdiff_t>(off), cap, 0);
  const size_t n = std::min(s.size(), cap - 1);
  std::memcpy(ctx.data() + off, s.data(), n);
}

std::string_view GetField(ByteView ctx, size_t off, size_t cap) {
  const char* p = reinterpret_cast<const char*>(ctx.data() + off);
  return {p, strnlen(p, cap)};
}

void PutI32(std::span<uint8_t> ctx, size_t off, int32_t v) { std::memcpy(ctx.data() + off, &v, 4); }

// Splits "CMD arg\r\n" into an upper-cased verb and its argument.
bool ParseCommand(std::string_view line, std::string& verb, std::string_view& arg) {
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
  const size_t sp = line.find(' ');
  std::string_view v = line.substr(0, sp);
  arg = sp == std::string_view::npos ? std::string_view{} : line.substr(sp + 1);
  if (v.empty() || v.size() > 4) return false;
  verb.clear();
  for (char c : v) {
    if (!std::isalpha(static_cast<unsigned char>(c))) return false;
    verb.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return true;
}

bool ParsePort(std::string_view arg, std::array<uint8_t, 6>& out) {
  for (size_t i = 0; i < 6; ++i) {
    const size_t comma = arg.find(',');
    if ((i < 5) == (comma == std::string_view::npos)) return false;
    std::string_view part = arg.substr(0, comma);
    unsigned v = 0;
    auto [end, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || end != part.data() + part.size() || part.empty() || v > 255) return false;
    out[i] = static_cast<uint8_t>(v);
    arg = i < 5 ? arg.substr(comma + 1) : std::string_view{};
  }
  return true;
}

class MiniFtp : public Server {
 public:
  void Start(ServerEnv& env) override {
    config_ = env.Allocate(64, AreaKind::kStatic);
    PutField(env.Mem(config_), 0, 64, "max_clients=1;anonymous=1;root=/srv/ftp");

    ctx_ = env.Allocate(kCtxSize);
    auto ctx = env.Mem(ctx_);
    PutI32(ctx, kCtrlSocket, 7);
    PutI32(ctx, kDataSocket, -1);
    ctx[kType] = 'A';
    PutField(ctx, kCwd, kFieldLen, "/");
    // Buffer state left behind by connection setup: fixed, non-trivial bytes.
    uint32_t x = 0x9E3779B9u;
    for (size_t i = kXferBuf; i < kCtxSize; ++i) {
      x = x * 1664525u + 1013904223u;
      ctx[i] = static_cast<uint8_t>(x >> 24);
    }
    env.Reply("send", "220 mini-ftp ready\r\n");
  }

  bool Handle(ServerEnv& env, ByteView request) override {
    env.Io("recv");
    env.Cover(Site("ftp:recv"));

    // Per-request scratch copy of the command line.
    const AreaId line_area = env.Allocate(request.size());
    std::copy(request.begin(), request.end(), env.Mem(line_area).begin());
    std::string line(AsString(env.Mem(line_area)));
    env.Free(line_area);

    std::string verb;
    std::string_view arg;
    if (!ParseCommand(line, verb, arg)) {
      env.Cover(Site("ftp:malformed"));
      env.Reply("send", "500 Syntax error, command unrecognized\r\n");
      return true;
    }
    auto ctx = env.Mem(ctx_);

    if (verb == "NOOP") {
      env.Cover(Site("ftp:noop"));
      env.Reply("send", "200 NOOP ok\r\n");
    } else if (verb == "SYST") {
      env.Cover(Site("ftp:syst"));
      env.Reply("send", "215 UNIX Type: L8\r\n");
    } else if (verb == "USER") {
      env.Cover(Site("ftp:user"));
      if (arg.empty()) {
        env.Cover(Site("ftp:user:empty"));
        env.Reply("send", "501 Syntax error in parameters\r\n");
        return true;
      }
      ctx[kAuth] = kUserGiven;
      PutField(ctx, kUser, kNameLen, arg);
      std::fill_n(ctx.begin() + kSession, kNameLen, 0);
      env.Reply("send", "331 User name okay, need password\r\n");
    } else if (verb == "PASS") {
      env.Cover(Site("ftp:pass"));
      if (ctx[kAuth] != kUserGiven) {
        env.Cover(Site("ftp:pass:nouser"));
        env.Reply("send", "503 Login with USER first\r\n");
        return true;
      }
      env.Cover(Site("ftp:pass:ok"));
      ctx[kAuth] = kLoggedIn;
      // Session record: access table and home directory derived from the user.
      uint32_t h = Fnv1a32(GetField(ctx, kUser, kNameLen));
      for (size_t i = 0; i < kNameLen; ++i) {
        h = h * 16777619u ^ static_cast<uint32_t>(i);
        ctx[kSession + i] = static_cast<uint8_t>(h >> 16);
      }
      env.Reply("send", "230 User logged in, proceed\r\n");
    } else if (verb == "QUIT") {
      env.Cover(Site("ftp:quit"));
      env.Reply("send", "221 Goodbye\r\n");
      env.Free(ctx_);
      return false;
    } else if (verb == "PWD" || verb == "PORT" || verb == "MKD" || verb == "CWD" ||
               verb == "LIST" || verb == "STOR" || verb == "TYPE") {
      if (ctx[kAuth] != kLoggedIn) {
        env.Cover(Site("ftp:needauth"));
        env.Reply("send", "530 Not logged in\r\n");
        return true;
      }
      HandleAuthenticated(env, ctx, verb, arg);
    } else {
      env.Cover(Site("ftp:unknown"));
      env.Reply("send", "500 Unknown command\r\n");
    }
    return true;
  }

 private:
  void HandleAuthenticated(ServerEnv& env, std::span<uint8_t> ctx, const std::string& verb,
                           std::string_view arg) {
    if (verb == "PWD") {
      env.Cover(Site("ftp:pwd"));
      env.Reply("send", "257 \"" + std::string(GetField(ctx, kCwd, kFieldLen)) + "\"\r\n");
    } else if (verb == "TYPE") {
      env.Cover(Site("ftp:type"));
      if (arg != "A" && arg != "I") {
        env.Reply("send", "504 Type not supported\r\n");
        return;
      }
      env.Cover(Site(arg == "A" ? "ftp:type:a" : "ftp:type:i"));
      ctx[kType] = static_cast<uint8_t>(arg[0]);
      env.Reply("send", "200 Type set\r\n");
    } else if (verb == "PORT") {
      env.Cover(Site("ftp:port"));
      std::array<uint8_t, 6> addr{};
      if (!ParsePort(arg, addr)) {
        env.Cover(Site("ftp:port:bad"));
        env.Reply("send", "501 Syntax error in parameters\r\n");
        return;
      }
      env.Cover(Site("ftp:port:ok"));
      ctx[kPortSet] = 1;
      std::copy(addr.begin(), addr.end(), ctx.begin() + kDataAddr);
      env.Reply("send", "200 PORT command successful\r\n");
    } else if (verb == "MKD") {
      env.Cover(Site("ftp:mkd"));
      if (arg.empty()) {
        env.Reply("send", "501 Syntax error in parameters\r\n");
        return;
      }
      env.Cover(Site("ftp:mkd:ok"));
      ctx[kDirCount]++;
      PutField(ctx, kLastMkd, kFieldLen, arg);
      env.Reply("send", "257 \"" + std::string(GetField(ctx, kLastMkd, kFieldLen)) + "\" created\r\n");
    } else if (verb == "CWD") {
      env.Cover(Site("ftp:cwd"));
      if (arg.empty()) {
        env.Reply("send", "501 Syntax error in parameters\r\n");
        return;
      }
      env.Cover(Site("ftp:cwd:ok"));
      PutField(ctx, kCwd, kFieldLen, arg);
      env.Reply("send", "250 Directory changed\r\n");
    } else if (verb == "LIST" || verb == "STOR") {
      env.Cover(Site(verb == "LIST" ? "ftp:list" : "ftp:stor"));
      if (ctx[kPortSet] == 0) {
        env.Cover(Site("ftp:xfer:noport"));
        env.Reply("send", "425 Use PORT first\r\n");
        return;
      }
      if (verb == "STOR") {
        if (arg.empty()) {
          env.Reply("send", "501 Syntax error in parameters\r\n");
          return;
        }
        StoreFile(env, arg);
      } else {
        env.Cover(Site("ftp:list:send"));
      }
      ctx[kPortSet] = 0;
      std::fill_n(ctx.begin() + kDataAddr, 6, 0);
      env.Reply("send", "150 Opening data connection\r\n");
      env.Reply("send", "226 Transfer complete\r\n");
    }
  }

  void StoreFile(ServerEnv& env, std::string_view name) {
    env.Cover(Site("ftp:stor:open"));
    const AreaId buf = env.Allocate(kStorBufLen);
    auto dst = env.Mem(buf);
    for (size_t i = 0; i < name.size(); ++i) {
      env.Cover(Site("ftp:stor:copy"));
      if (i >= kStorBufLen) env.Crash(1, "mini_ftp.stor_copy_filename");
      dst[i] = static_cast<uint8_t>(name[i]);
    }
    env.Free(buf);
  }

  AreaId config_ = 0;
  AreaId ctx_ = 0;
};

}  // namespace

TargetSpec MiniFtpTarget() {
  TargetSpec spec;
  spec.name = "mini-ftp";
  spec.factory = [] { return std::make_unique<MiniFtp>(); };
  spec.supports_response_codes = true;
  spec.response_code = ThreeDigitCode;
  spec.planted_bugs = {{1, "STOR with a filename longer than 64 bytes, logged in, after PORT"}};
  spec.io_routines = {{"recv", HookRole::kReceive}, {"send", HookRole::kSend}};
  return spec;
}

}  // namespace statefuzz
