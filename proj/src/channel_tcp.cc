#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

#include <spdlog/spdlog.h>

#include "session.h"
#include "statefuzz/executor.h"

namespace statefuzz {
namespace {

using Clock = std::chrono::steady_clock;

constexpr uint32_t kMaxFrame = 16u << 20;

enum class IoStatus { kOk, kEof, kTimeout, kError };

int RemainingMs(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
  return left.count() < 0 ? 0 : static_cast<int>(left.count());
}

bool WaitReadable(int fd, int timeout_ms) {
  pollfd p{fd, POLLIN, 0};
  int rc;
  do {
    rc = ::poll(&p, 1, timeout_ms);
  } while (rc < 0 && errno == EINTR);
  return rc > 0;
}

// Reads exactly n bytes. A deadline of nullopt blocks indefinitely.
IoStatus ReadFull(int fd, uint8_t* buf, size_t n, std::optional<Clock::time_point> deadline) {
  size_t got = 0;
  while (got < n) {
    if (deadline && !WaitReadable(fd, RemainingMs(*deadline))) return IoStatus::kTimeout;
    const ssize_t k = ::recv(fd, buf + got, n - got, 0);
    if (k == 0) return got == 0 ? IoStatus::kEof : IoStatus::kError;
    if (k < 0) {
      if (errno == EINTR) continue;
      return errno == ECONNRESET ? IoStatus::kEof : IoStatus::kError;
    }
    got += static_cast<size_t>(k);
  }
  return IoStatus::kOk;
}

IoStatus ReadFrame(int fd, Bytes& out, std::optional<Clock::time_point> deadline) {
  uint8_t hdr[4];
  IoStatus st = ReadFull(fd, hdr, 4, deadline);
  if (st != IoStatus::kOk) return st;
  const uint32_t len = hdr[0] | (hdr[1] << 8) | (hdr[2] << 16) | (uint32_t{hdr[3]} << 24);
  if (len > kMaxFrame) return IoStatus::kError;
  out.resize(len);
  // The rest of a started frame is already in flight; give it the full wait.
  return len == 0 ? IoStatus::kOk : ReadFull(fd, out.data(), len, std::nullopt);
}

void AppendFrame(Bytes& wire, ByteView payload) {
  const auto len = static_cast<uint32_t>(payload.size());
  for (int i = 0; i < 4; ++i) wire.push_back(static_cast<uint8_t>(len >> (8 * i)));
  wire.insert(wire.end(), payload.begin(), payload.end());
}

bool WriteAll(int fd, ByteView data) {
  size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t k = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (k < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<size_t>(k);
  }
  return true;
}

bool WriteBatch(int fd, const std::vector<Bytes>& frames) {
  if (frames.empty()) return true;
  Bytes wire;
  for (const Bytes& f : frames) AppendFrame(wire, f);
  return WriteAll(fd, wire);
}

void SetNoDelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

// Waits for the first reply frame, then takes everything already buffered.
// Returns false once the peer has closed the connection.
bool CollectReplies(int fd, std::chrono::milliseconds timeout, std::vector<Bytes>& out,
                    bool& failed) {
  Bytes frame;
  IoStatus st = ReadFrame(fd, frame, Clock::now() + timeout);
  while (st == IoStatus::kOk) {
    out.push_back(std::move(frame));
    if (!WaitReadable(fd, 0)) return true;
    st = ReadFrame(fd, frame, Clock::now());
  }
  if (st == IoStatus::kTimeout) return true;
  if (st == IoStatus::kError) failed = true;
  return false;
}

// Server side of one connection: a fresh target per accepted client.
void ServeOne(int listen_fd, Session& session, std::chrono::milliseconds accept_timeout) {
  if (!WaitReadable(listen_fd, static_cast<int>(accept_timeout.count()))) {
    spdlog::warn("tcp channel: no client connected");
    return;
  }
  const int conn = ::accept(listen_fd, nullptr, nullptr);
  if (conn < 0) {
    spdlog::warn("tcp channel: accept failed: {}", std::strerror(errno));
    return;
  }
  SetNoDelay(conn);
  std::vector<Bytes> replies;
  bool alive = session.Start(replies);
  WriteBatch(conn, replies);
  Bytes request;
  while (alive && ReadFrame(conn, request, std::nullopt) == IoStatus::kOk) {
    const Session::Step step = session.Deliver(request, replies);
    WriteBatch(conn, replies);
    alive = step == Session::Step::kAlive;
  }
  ::shutdown(conn, SHUT_RDWR);
  ::close(conn);
}

}  // namespace

Executor::~Executor() {
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

ExecResult Executor::RunTcp(const FuzzInput& input, bool analysis) {
  ExecResult r;
  if (listen_fd_ < 0) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    socklen_t alen = sizeof addr;
    if (listen_fd_ < 0 || ::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
        ::listen(listen_fd_, 1) != 0 ||
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &alen) != 0) {
      spdlog::error("tcp channel: cannot listen on loopback: {}", std::strerror(errno));
      if (listen_fd_ >= 0) ::close(listen_fd_);
      listen_fd_ = -1;
      r.outcome = Outcome::kHang;
      r.channel_failure = true;
      return r;
    }
    listen_port_ = ntohs(addr.sin_port);
  }

  Session session(spec_, options_, analysis, coverage_.data());
  std::thread server(ServeOne, listen_fd_, std::ref(session), options_.hang_timeout);

  const auto deadline = Clock::now() + options_.hang_timeout;
  const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(listen_port_);
  bool failed = fd < 0 || ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0;
  if (!failed) {
    SetNoDelay(fd);
    bool open = CollectReplies(fd, options_.reply_timeout, r.banner, failed);
    for (const Bytes& msg : input.messages) {
      if (!open || failed) break;
      Bytes wire;
      AppendFrame(wire, msg);
      // The server may have ended the session after its last reply.
      if (!WriteAll(fd, wire)) break;
      std::vector<Bytes> replies;
      open = CollectReplies(fd, options_.reply_timeout, replies, failed);
      r.replies.push_back(std::move(replies));
      if (Clock::now() > deadline) {
        r.outcome = Outcome::kHang;
        break;
      }
    }
  }
  if (fd >= 0) {
    ::shutdown(fd, SHUT_RDWR);
    ::close(fd);
  }
  server.join();
  session.Finish(r);
  // A write can race the server's close; only messages it handled count.
  r.replies.resize(r.messages_delivered);
  if (failed && r.outcome == Outcome::kOk) {
    spdlog::warn("tcp channel failure during session; treating as hang");
    r.outcome = Outcome::kHang;
    r.channel_failure = true;
  }
  return r;
}

}  // namespace statefuzz
