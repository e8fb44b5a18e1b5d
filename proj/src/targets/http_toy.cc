// HTTP-like server built on an event library: requests arrive through
// http_read_request and answers leave through http_reply, while the raw
// read/write calls underneath happen at other points. Every request gets an
// interim "100 Continue" written before the session is updated, so with the
// default hooks the iteration boundary falls before the state change.
//
// Requests: "GET <path>", "POST /login", "POST /logout", "POST /counter".

#include <algorithm>
#include <cstring>

#include "statefuzz/target.h"

namespace statefuzz {
namespace {

constexpr size_t kCtxSize = 256;
constexpr size_t kLoggedIn = 0;
constexpr size_t kCounter = 1;
constexpr size_t kSession = 16;  // 64 bytes, filled at login
constexpr size_t kSessionLen = 64;
constexpr size_t kTables = 80;

class HttpToy : public Server {
 public:
  void Start(ServerEnv& env) override {
    ctx_ = env.Allocate(kCtxSize);
    auto ctx = env.Mem(ctx_);
    for (size_t i = kTables; i < kCtxSize; ++i) ctx[i] = static_cast<uint8_t>(i * 53 + 1);
  }

  bool Handle(ServerEnv& env, ByteView request) override {
    env.Io("read");
    env.Io("http_read_request");
    std::string_view line = AsString(request);
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);

    env.Reply("write", "HTTP/1.1 100 Continue\r\n\r\n");

    auto ctx = env.Mem(ctx_);
    int status = 200;
    if (line.starts_with("GET ")) {
      env.Cover(Fnv1a32("http:get"));
    } else if (line == "POST /login") {
      env.Cover(Fnv1a32("http:login"));
      ctx[kLoggedIn] = 1;
      for (size_t i = 0; i < kSessionLen; ++i) ctx[kSession + i] = static_cast<uint8_t>(i * 7 + 0x21);
    } else if (line == "POST /logout") {
      env.Cover(Fnv1a32("http:logout"));
      ctx[kLoggedIn] = 0;
      std::fill_n(ctx.begin() + kSession, kSessionLen, 0);
    } else if (line == "POST /counter") {
      env.Cover(Fnv1a32("http:counter"));
      if (ctx[kLoggedIn] == 0) status = 403;
      else ctx[kCounter]++;
    } else {
      env.Cover(Fnv1a32("http:bad"));
      status = 400;
    }
    env.Reply("http_reply", "HTTP/1.1 " + std::to_string(status) + "\r\n\r\n");
    return true;
  }

 private:
  AreaId ctx_ = 0;
};

}  // namespace

TargetSpec HttpToyTarget() {
  TargetSpec spec;
  spec.name = "http-toy";
  spec.factory = [] { return std::make_unique<HttpToy>(); };
  spec.supports_response_codes = false;
  spec.io_routines = {{"read", HookRole::kReceive},
                      {"http_read_request", HookRole::kReceive},
                      {"write", HookRole::kSend},
                      {"http_reply", HookRole::kSend}};
  return spec;
}

}  // namespace statefuzz
