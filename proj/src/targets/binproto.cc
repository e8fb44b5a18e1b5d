// Binary TLV protocol with a three-step handshake.
//
// Frame: type u8 | length u16 LE | value[length]. Types: 1 HELLO, 2 KEY,
// 3 FINISHED, 4 DATA, 5 PING. The handshake must run HELLO, KEY, FINISHED in
// order; anything out of order or badly framed resets the session to its
// initial content. Replies are binary and carry no status code.
//
// Planted bug 2: a DATA record longer than 200 bytes on an established
// session overruns the record buffer.

#include <algorithm>
#include <cstring>

#include "statefuzz/target.h"

namespace statefuzz {
namespace {

constexpr size_t kCtxSize = 192;
constexpr size_t kPhase = 0;
constexpr size_t kClientRandom = 8;  // 32 bytes from HELLO
constexpr size_t kSessionKey = 40;   // 32 bytes derived at KEY
constexpr size_t kRecordCount = 72;
constexpr size_t kTables = 80;       // fixed cipher tables

constexpr size_t kRecordBufLen = 200;

enum Type : uint8_t { kHello = 1, kKey = 2, kFinished = 3, kData = 4, kPing = 5 };

class Binproto : public Server {
 public:
  void Start(ServerEnv& env) override {
    ctx_ = env.Allocate(kCtxSize);
    Init(env.Mem(ctx_));
  }

  bool Handle(ServerEnv& env, ByteView request) override {
    env.Io("recv");
    env.Cover(Fnv1a32("bp:recv"));
    auto ctx = env.Mem(ctx_);

    if (request.size() < 3) return Reject(env, ctx, 0xE0);
    const uint8_t type = request[0];
    const size_t len = request[1] | (size_t{request[2]} << 8);
    if (request.size() != 3 + len) return Reject(env, ctx, 0xE1);
    ByteView value = request.subspan(3);

    switch (type) {
      case kHello:
        env.Cover(Fnv1a32("bp:hello"));
        if (ctx[kPhase] != 0 || len == 0) return Reject(env, ctx, 0xE2);
        ctx[kPhase] = 1;
        std::fill_n(ctx.begin() + kClientRandom, 32, 0);
        std::copy_n(value.begin(), std::min<size_t>(len, 32), ctx.begin() + kClientRandom);
        return Answer(env, kHello, {0x01, 0x00});
      case kKey: {
        env.Cover(Fnv1a32("bp:key"));
        if (ctx[kPhase] != 1 || len < 4) return Reject(env, ctx, 0xE3);
        ctx[kPhase] = 2;
        uint32_t h = 2166136261u;
        for (uint8_t b : value) h = (h ^ b) * 16777619u;
        for (size_t i = 0; i < 32; ++i) {
          h = (h ^ ctx[kClientRandom + i]) * 16777619u;
          ctx[kSessionKey + i] = static_cast<uint8_t>(h >> 24);
        }
        return Answer(env, kKey, {0x02, 0x00});
      }
      case kFinished:
        env.Cover(Fnv1a32("bp:finished"));
        if (ctx[kPhase] != 2) return Reject(env, ctx, 0xE4);
        ctx[kPhase] = 3;
        return Answer(env, kFinished, {0x03, 0x00});
      case kData: {
        env.Cover(Fnv1a32("bp:data"));
        if (ctx[kPhase] != 3) return Reject(env, ctx, 0xE5);
        env.Cover(Fnv1a32("bp:data:established"));
        const AreaId rec = env.Allocate(kRecordBufLen);
        auto dst = env.Mem(rec);
        for (size_t i = 0; i < len; ++i) {
          env.Cover(Fnv1a32("bp:data:copy"));
          if (i >= kRecordBufLen) env.Crash(2, "binproto.data_record_copy");
          dst[i] = value[i] ^ ctx[kSessionKey + (i % 32)];
        }
        Bytes out(dst.begin(), dst.begin() + static_cast<std::ptrdiff_t>(len));
        env.Free(rec);
        ctx[kRecordCount]++;
        return Answer(env, kData, out);
      }
      case kPing:
        env.Cover(Fnv1a32("bp:ping"));
        return Answer(env, kPing, {});
      default:
        return Reject(env, ctx, 0xEF);
    }
  }

 private:
  static void Init(std::span<uint8_t> ctx) {
    std::fill(ctx.begin(), ctx.end(), 0);
    for (size_t i = kTables; i < kCtxSize; ++i) ctx[i] = static_cast<uint8_t>((i * i * 31 + 7) >> 2);
  }

  bool Answer(ServerEnv& env, uint8_t type, const Bytes& value) {
    Bytes frame = {type, static_cast<uint8_t>(value.size()), static_cast<uint8_t>(value.size() >> 8)};
    frame.insert(frame.end(), value.begin(), value.end());
    env.Reply("send", ByteView(frame));
    return true;
  }

  bool Reject(ServerEnv& env, std::span<uint8_t> ctx, uint8_t reason) {
    env.Cover(Fnv1a32("bp:reject") ^ reason);
    Init(ctx);
    return Answer(env, 0xFF, {reason});
  }

  AreaId ctx_ = 0;
};

}  // namespace

TargetSpec BinprotoTarget() {
  TargetSpec spec;
  spec.name = "binproto";
  spec.factory = [] { return std::make_unique<Binproto>(); };
  spec.supports_response_codes = false;
  spec.planted_bugs = {{2, "DATA record longer than 200 bytes after a complete handshake"}};
  spec.io_routines = {{"recv", HookRole::kReceive}, {"send", HookRole::kSend}};
  return spec;
}

}  // namespace statefuzz
