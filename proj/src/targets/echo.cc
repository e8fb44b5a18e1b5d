// Stateless echo server: the context is written once at startup and only
// read afterwards, so every iteration snapshot is the same.

#include <algorithm>
#include <cstring>

#include "statefuzz/target.h"

namespace statefuzz {
namespace {

class Echo : public Server {
 public:
  void Start(ServerEnv& env) override {
    ctx_ = env.Allocate(128);
    auto ctx = env.Mem(ctx_);
    static constexpr std::string_view kInit = "echo-server sockfd=5 backlog=16 bufsize=4096 mode=line";
    std::memcpy(ctx.data(), kInit.data(), kInit.size());
    for (size_t i = kInit.size(); i < ctx.size(); ++i) ctx[i] = static_cast<uint8_t>(i * 37 + 11);
  }

  bool Handle(ServerEnv& env, ByteView request) override {
    env.Io("read");
    env.Cover(Fnv1a32("echo:read"));
    const AreaId scratch = env.Allocate(request.size());
    std::copy(request.begin(), request.end(), env.Mem(scratch).begin());
    Bytes out(env.Mem(scratch).begin(), env.Mem(scratch).end());
    env.Free(scratch);
    if (out.empty()) env.Cover(Fnv1a32("echo:empty"));
    else if (out.size() > 256) env.Cover(Fnv1a32("echo:long"));
    env.Reply("write", ByteView(out));
    return true;
  }

 private:
  AreaId ctx_ = 0;
};

}  // namespace

TargetSpec EchoTarget() {
  TargetSpec spec;
  spec.name = "echo";
  spec.factory = [] { return std::make_unique<Echo>(); };
  spec.io_routines = {{"read", HookRole::kReceive}, {"write", HookRole::kSend}};
  return spec;
}

}  // namespace statefuzz
