// Copyright 2026 The KernelForge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "kernelforge/zmtp.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "kernelforge/error.hpp"

namespace kernelforge::zmtp {

namespace {

constexpr std::uint8_t kFlagMore = 0x01;
constexpr std::uint8_t kFlagLong = 0x02;
constexpr std::uint8_t kFlagCommand = 0x04;
constexpr std::size_t kGreetingSize = 64;
constexpr std::uint64_t kMaxFrameSize = std::uint64_t{1} << 30;

bool read_exact(int fd, void* buffer, std::size_t size) {
  auto* out = static_cast<char*>(buffer);
  while (size > 0) {
    ssize_t n = ::recv(fd, out, size, 0);
    if (n == 0) return false;
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    out += n;
    size -= static_cast<std::size_t>(n);
  }
  return true;
}

bool write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

void append_frame(std::string& out, std::string_view body, std::uint8_t flags) {
  if (body.size() > 255) {
    out.push_back(static_cast<char>(flags | kFlagLong));
    std::uint64_t size = body.size();
    for (int shift = 56; shift >= 0; shift -= 8) {
      out.push_back(static_cast<char>((size >> shift) & 0xff));
    }
  } else {
    out.push_back(static_cast<char>(flags));
    out.push_back(static_cast<char>(body.size()));
  }
  out.append(body);
}

std::string encode_message(const Multipart& frames) {
  std::string out;
  std::size_t total = 0;
  for (const auto& f : frames) total += f.size() + 9;
  out.reserve(total);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    append_frame(out, frames[i], i + 1 < frames.size() ? kFlagMore : 0);
  }
  return out;
}

std::string command_body(std::string_view name, std::string_view data) {
  std::string body;
  body.push_back(static_cast<char>(name.size()));
  body.append(name);
  body.append(data);
  return body;
}

void append_property(std::string& out, std::string_view name,
                     std::string_view value) {
  out.push_back(static_cast<char>(name.size()));
  out.append(name);
  std::uint32_t size = static_cast<std::uint32_t>(value.size());
  for (int shift = 24; shift >= 0; shift -= 8) {
    out.push_back(static_cast<char>((size >> shift) & 0xff));
  }
  out.append(value);
}

struct Properties {
  std::string socket_type;
  std::string identity;
};

std::optional<Properties> parse_ready(std::string_view body) {
  if (body.empty()) return std::nullopt;
  auto name_size = static_cast<std::uint8_t>(body[0]);
  if (body.size() < 1u + name_size || body.substr(1, name_size) != "READY") {
    return std::nullopt;
  }
  body.remove_prefix(1u + name_size);
  Properties props;
  while (!body.empty()) {
    auto key_size = static_cast<std::uint8_t>(body[0]);
    if (body.size() < 1u + key_size + 4u) return std::nullopt;
    std::string key(body.substr(1, key_size));
    body.remove_prefix(1u + key_size);
    std::uint32_t value_size = 0;
    for (int i = 0; i < 4; ++i) {
      value_size = (value_size << 8) | static_cast<std::uint8_t>(body[i]);
    }
    body.remove_prefix(4);
    if (body.size() < value_size) return std::nullopt;
    std::string value(body.substr(0, value_size));
    body.remove_prefix(value_size);
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (key == "socket-type") props.socket_type = value;
    if (key == "identity") props.identity = value;
  }
  return props;
}

// Reads one frame. Returns false on EOF, error or an oversized frame.
bool read_frame(int fd, std::uint8_t& flags, std::string& body) {
  if (!read_exact(fd, &flags, 1)) return false;
  std::uint64_t size = 0;
  if (flags & kFlagLong) {
    std::array<std::uint8_t, 8> raw{};
    if (!read_exact(fd, raw.data(), raw.size())) return false;
    for (auto b : raw) size = (size << 8) | b;
  } else {
    std::uint8_t raw = 0;
    if (!read_exact(fd, &raw, 1)) return false;
    size = raw;
  }
  if (size > kMaxFrameSize) return false;
  body.resize(static_cast<std::size_t>(size));
  return size == 0 || read_exact(fd, body.data(), body.size());
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

void set_recv_timeout(int fd, std::chrono::milliseconds timeout) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
}

struct AddrInfoDeleter {
  void operator()(addrinfo* p) const { ::freeaddrinfo(p); }
};

std::unique_ptr<addrinfo, AddrInfoDeleter> resolve(const std::string& host,
                                                   std::uint16_t port,
                                                   bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  const char* node =
      (host.empty() || host == "*" || host == "0.0.0.0") && passive
          ? nullptr
          : host.c_str();
  addrinfo* result = nullptr;
  std::string service = std::to_string(port);
  int rc = ::getaddrinfo(node, service.c_str(), &hints, &result);
  if (rc != 0 || result == nullptr) {
    throw Error(ErrorCode::kTransport,
                "cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  return std::unique_ptr<addrinfo, AddrInfoDeleter>(result);
}

}  // namespace

std::string_view socket_type_name(SocketType type) {
  switch (type) {
    case SocketType::kRouter: return "ROUTER";
    case SocketType::kDealer: return "DEALER";
    case SocketType::kPub: return "PUB";
    case SocketType::kSub: return "SUB";
    case SocketType::kRep: return "REP";
    case SocketType::kReq: return "REQ";
  }
  return "?";
}

bool compatible(SocketType self, std::string_view peer) {
  auto any_of = [&](std::initializer_list<std::string_view> names) {
    return std::find(names.begin(), names.end(), peer) != names.end();
  };
  switch (self) {
    case SocketType::kRouter: return any_of({"REQ", "DEALER", "ROUTER"});
    case SocketType::kDealer: return any_of({"REP", "DEALER", "ROUTER"});
    case SocketType::kPub: return any_of({"SUB", "XSUB"});
    case SocketType::kSub: return any_of({"PUB", "XPUB"});
    case SocketType::kRep: return any_of({"REQ", "DEALER"});
    case SocketType::kReq: return any_of({"REP", "ROUTER"});
  }
  return false;
}

struct Peer {
  int fd = -1;
  std::string routing_id;
  std::vector<std::string> subscriptions;  // PUB side; guarded by Impl::mu
  std::mutex write_mu;
  std::atomic<bool> ready{false};
  std::atomic<bool> alive{true};
  std::thread reader;
};

struct Socket::Impl {
  SocketType type;
  std::string identity;

  mutable std::mutex mu;
  std::condition_variable cv;
  std::deque<Multipart> inbox;
  std::vector<std::shared_ptr<Peer>> peers;
  std::vector<std::string> subscriptions;  // SUB side
  std::vector<int> listeners;
  std::vector<std::thread> acceptors;
  bool closed = false;
  std::uint32_t next_routing_id = 0x6b8b4567;
  std::size_t round_robin = 0;

  Impl(SocketType t, std::string id) : type(t), identity(std::move(id)) {}

  bool advertises_identity() const {
    return type == SocketType::kDealer || type == SocketType::kReq ||
           type == SocketType::kRouter;
  }

  std::string make_routing_id() {
    std::string id(5, '\0');
    std::uint32_t n = next_routing_id++;
    for (int i = 0; i < 4; ++i) {
      id[static_cast<std::size_t>(4 - i)] = static_cast<char>((n >> (8 * i)) & 0xff);
    }
    return id;
  }

  bool handshake(Peer& peer) {
    std::array<std::uint8_t, kGreetingSize> greeting{};
    greeting[0] = 0xff;
    greeting[8] = 0x01;
    greeting[9] = 0x7f;
    greeting[10] = 3;
    greeting[11] = 0;
    std::memcpy(greeting.data() + 12, "NULL", 4);
    if (!write_all(peer.fd, std::string_view(reinterpret_cast<const char*>(greeting.data()),
                                             greeting.size()))) {
      return false;
    }
    std::array<std::uint8_t, kGreetingSize> theirs{};
    if (!read_exact(peer.fd, theirs.data(), theirs.size())) return false;
    if (theirs[0] != 0xff || (theirs[9] & 0x01) == 0 || theirs[10] < 3 ||
        std::memcmp(theirs.data() + 12, "NULL\0", 5) != 0) {
      spdlog::warn("zmtp: rejecting peer with unsupported greeting");
      return false;
    }

    std::string props;
    append_property(props, "Socket-Type", socket_type_name(type));
    if (advertises_identity()) append_property(props, "Identity", identity);
    std::string ready;
    append_frame(ready, command_body("READY", props), kFlagCommand);
    if (!write_all(peer.fd, ready)) return false;

    std::uint8_t flags = 0;
    std::string body;
    if (!read_frame(peer.fd, flags, body) || !(flags & kFlagCommand)) {
      return false;
    }
    auto parsed = parse_ready(body);
    if (!parsed || !compatible(type, parsed->socket_type)) {
      spdlog::warn("zmtp: {} socket rejects peer of type '{}'",
                   socket_type_name(type), parsed ? parsed->socket_type : "?");
      std::string error;
      append_frame(error, command_body("ERROR", "\x15" "incompatible socket"),
                   kFlagCommand);
      write_all(peer.fd, error);
      return false;
    }
    if (type == SocketType::kRouter || type == SocketType::kRep) {
      std::lock_guard lock(mu);
      peer.routing_id = parsed->identity.empty() || type == SocketType::kRep
                            ? make_routing_id()
                            : parsed->identity;
    }
    if (type == SocketType::kSub) {
      std::vector<std::string> subs;
      {
        std::lock_guard lock(mu);
        subs = subscriptions;
      }
      for (const auto& s : subs) {
        std::lock_guard wlock(peer.write_mu);
        write_all(peer.fd, encode_message({"\x01" + s}));
      }
    }
    return true;
  }

  void handle_command(Peer& peer, std::string_view body) {
    if (body.empty()) return;
    auto name_size = static_cast<std::uint8_t>(body[0]);
    if (body.size() < 1u + name_size) return;
    std::string_view name = body.substr(1, name_size);
    std::string_view data = body.substr(1u + name_size);
    if (name == "PING") {
      std::string pong;
      append_frame(pong, command_body("PONG", data.size() >= 2 ? data.substr(2) : ""),
                   kFlagCommand);
      std::lock_guard lock(peer.write_mu);
      write_all(peer.fd, pong);
    } else if (type == SocketType::kPub && (name == "SUBSCRIBE" || name == "CANCEL")) {
      update_subscription(peer, name == "SUBSCRIBE", std::string(data));
    }
  }

  void update_subscription(Peer& peer, bool add, std::string topic) {
    std::lock_guard lock(mu);
    auto& subs = peer.subscriptions;
    if (add) {
      subs.push_back(std::move(topic));
    } else if (auto it = std::find(subs.begin(), subs.end(), topic); it != subs.end()) {
      subs.erase(it);
    }
  }

  void deliver(Peer& peer, Multipart message) {
    switch (type) {
      case SocketType::kPub:
        if (message.size() == 1 && !message[0].empty() &&
            (message[0][0] == 0 || message[0][0] == 1)) {
          update_subscription(peer, message[0][0] == 1, message[0].substr(1));
        }
        return;
      case SocketType::kRouter:
      case SocketType::kRep:
        message.insert(message.begin(), peer.routing_id);
        break;
      case SocketType::kReq:
        if (message.empty() || !message.front().empty()) return;
        message.erase(message.begin());
        break;
      case SocketType::kDealer:
      case SocketType::kSub:
        break;
    }
    {
      std::lock_guard lock(mu);
      if (closed) return;
      inbox.push_back(std::move(message));
    }
    cv.notify_one();
  }

  void serve_peer(const std::shared_ptr<Peer>& peer, bool need_handshake) {
    if (need_handshake) {
      if (!handshake(*peer)) {
        peer->alive = false;
        return;
      }
      peer->ready = true;
    }
    Multipart current;
    std::uint8_t flags = 0;
    std::string body;
    while (read_frame(peer->fd, flags, body)) {
      if (flags & kFlagCommand) {
        handle_command(*peer, body);
        continue;
      }
      current.push_back(std::move(body));
      body.clear();
      if (!(flags & kFlagMore)) {
        deliver(*peer, std::move(current));
        current.clear();
      }
    }
    peer->alive = false;
  }

  // Joins and closes peers whose reader has exited.
  void reap() {
    std::vector<std::shared_ptr<Peer>> dead;
    {
      std::lock_guard lock(mu);
      auto it = std::stable_partition(peers.begin(), peers.end(),
                                      [](const auto& p) { return p->alive.load(); });
      dead.assign(std::make_move_iterator(it), std::make_move_iterator(peers.end()));
      peers.erase(it, peers.end());
    }
    for (auto& p : dead) {
      if (p->reader.joinable()) p->reader.join();
      ::close(p->fd);
    }
  }

  void accept_loop(int listener) {
    for (;;) {
      int fd = ::accept(listener, nullptr, nullptr);
      if (fd < 0) {
        if (errno == EINTR || errno == ECONNABORTED) continue;
        if (errno == EMFILE || errno == ENFILE) {
          std::this_thread::sleep_for(std::chrono::milliseconds(50));
          continue;
        }
        return;
      }
      set_nodelay(fd);
      reap();
      auto peer = std::make_shared<Peer>();
      peer->fd = fd;
      std::lock_guard lock(mu);
      if (closed) {
        ::close(fd);
        return;
      }
      peer->reader = std::thread([this, peer] { serve_peer(peer, true); });
      peers.push_back(std::move(peer));
    }
  }

  std::vector<std::shared_ptr<Peer>> targets(const Multipart& message,
                                             std::size_t& skip) {
    std::lock_guard lock(mu);
    std::vector<std::shared_ptr<Peer>> out;
    skip = 0;
    auto usable = [](const std::shared_ptr<Peer>& p) {
      return p->ready.load() && p->alive.load();
    };
    switch (type) {
      case SocketType::kRouter:
      case SocketType::kRep:
        skip = 1;
        if (message.empty()) return out;
        for (const auto& p : peers) {
          if (usable(p) && p->routing_id == message.front()) {
            out.push_back(p);
            break;
          }
        }
        break;
      case SocketType::kPub: {
        std::string_view topic = message.empty() ? std::string_view{} : message.front();
        for (const auto& p : peers) {
          if (!usable(p)) continue;
          bool match = std::any_of(p->subscriptions.begin(), p->subscriptions.end(),
                                   [&](const std::string& s) { return topic.starts_with(s); });
          if (match) out.push_back(p);
        }
        break;
      }
      case SocketType::kDealer:
      case SocketType::kReq:
      case SocketType::kSub: {
        std::vector<std::shared_ptr<Peer>> live;
        for (const auto& p : peers) {
          if (usable(p)) live.push_back(p);
        }
        if (!live.empty()) out.push_back(live[round_robin++ % live.size()]);
        break;
      }
    }
    return out;
  }

  void close() {
    std::vector<int> listen_fds;
    std::vector<std::thread> accept_threads;
    {
      std::lock_guard lock(mu);
      if (closed) return;
      closed = true;
      listen_fds.swap(listeners);
      accept_threads.swap(acceptors);
    }
    cv.notify_all();
    for (int fd : listen_fds) ::shutdown(fd, SHUT_RDWR);
    for (auto& t : accept_threads) t.join();
    for (int fd : listen_fds) ::close(fd);

    std::vector<std::shared_ptr<Peer>> all;
    {
      std::lock_guard lock(mu);
      all.swap(peers);
    }
    for (auto& p : all) ::shutdown(p->fd, SHUT_RDWR);
    for (auto& p : all) {
      if (p->reader.joinable()) p->reader.join();
      ::close(p->fd);
    }
  }
};

Socket::Socket(SocketType type, std::string identity)
    : impl_(std::make_shared<Impl>(type, std::move(identity))) {}

Socket::~Socket() { close(); }

SocketType Socket::type() const { return impl_->type; }

std::uint16_t Socket::bind(const std::string& host, std::uint16_t port) {
  auto addr = resolve(host, port, true);
  int fd = ::socket(addr->ai_family, addr->ai_socktype, addr->ai_protocol);
  if (fd < 0) throw Error(ErrorCode::kTransport, std::strerror(errno));
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd, addr->ai_addr, addr->ai_addrlen) != 0 || ::listen(fd, 64) != 0) {
    int err = errno;
    ::close(fd);
    throw Error(ErrorCode::kTransport, "cannot bind " + host + ":" +
                                           std::to_string(port) + ": " +
                                           std::strerror(err));
  }
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
  std::lock_guard lock(impl_->mu);
  if (impl_->closed) {
    ::close(fd);
    throw Error(ErrorCode::kTransport, "socket closed");
  }
  impl_->listeners.push_back(fd);
  impl_->acceptors.emplace_back([impl = impl_.get(), fd] { impl->accept_loop(fd); });
  return ntohs(bound.sin_port);
}

void Socket::connect(const std::string& host, std::uint16_t port,
                     std::chrono::milliseconds timeout) {
  using Clock = std::chrono::steady_clock;
  const auto deadline = Clock::now() + timeout;
  auto addr = resolve(host, port, false);
  for (;;) {
    int fd = ::socket(addr->ai_family, addr->ai_socktype, addr->ai_protocol);
    if (fd < 0) throw Error(ErrorCode::kTransport, std::strerror(errno));
    if (::connect(fd, addr->ai_addr, addr->ai_addrlen) == 0) {
      set_nodelay(fd);
      auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - Clock::now());
      set_recv_timeout(fd, std::max(remaining, std::chrono::milliseconds(1)));
      auto peer = std::make_shared<Peer>();
      peer->fd = fd;
      if (impl_->handshake(*peer)) {
        set_recv_timeout(fd, std::chrono::milliseconds(0));
        peer->ready = true;
        std::lock_guard lock(impl_->mu);
        if (impl_->closed) {
          ::close(fd);
          throw Error(ErrorCode::kTransport, "socket closed");
        }
        peer->reader = std::thread(
            [impl = impl_.get(), peer] { impl->serve_peer(peer, false); });
        impl_->peers.push_back(std::move(peer));
        return;
      }
    }
    ::close(fd);
    if (Clock::now() >= deadline) {
      throw Error(ErrorCode::kTimeout, "cannot connect to " + host + ":" +
                                           std::to_string(port));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

bool Socket::send(const Multipart& message) {
  std::size_t skip = 0;
  auto peers = impl_->targets(message, skip);
  if (peers.empty()) return false;
  Multipart body;
  if (impl_->type == SocketType::kReq) body.emplace_back();
  body.insert(body.end(), message.begin() + static_cast<std::ptrdiff_t>(skip),
              message.end());
  const std::string wire = encode_message(body);
  bool any = false;
  for (auto& p : peers) {
    std::lock_guard lock(p->write_mu);
    if (write_all(p->fd, wire)) {
      any = true;
    } else {
      p->alive = false;
    }
  }
  return any;
}

std::optional<Multipart> Socket::recv(std::chrono::milliseconds timeout) {
  std::unique_lock lock(impl_->mu);
  impl_->cv.wait_for(lock, timeout,
                     [&] { return impl_->closed || !impl_->inbox.empty(); });
  if (impl_->inbox.empty()) return std::nullopt;
  Multipart out = std::move(impl_->inbox.front());
  impl_->inbox.pop_front();
  return out;
}

void Socket::subscribe(std::string_view prefix) {
  std::vector<std::shared_ptr<Peer>> peers;
  {
    std::lock_guard lock(impl_->mu);
    impl_->subscriptions.emplace_back(prefix);
    peers = impl_->peers;
  }
  const std::string wire = encode_message({"\x01" + std::string(prefix)});
  for (auto& p : peers) {
    if (!p->ready) continue;
    std::lock_guard lock(p->write_mu);
    write_all(p->fd, wire);
  }
}

std::size_t Socket::peer_count() const {
  std::lock_guard lock(impl_->mu);
  return static_cast<std::size_t>(std::count_if(
      impl_->peers.begin(), impl_->peers.end(),
      [](const auto& p) { return p->ready.load() && p->alive.load(); }));
}

void Socket::close() { impl_->close(); }

}  // namespace kernelforge::zmtp
