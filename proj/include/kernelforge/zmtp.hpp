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

// A small ZMTP 3.0 (NULL mechanism) transport over TCP.
//
// Implements the subset of ZeroMQ socket semantics the kernel protocol needs:
// ROUTER/DEALER for request channels, PUB/SUB for broadcast and REQ/REP for
// the heartbeat. Wire-compatible with libzmq peers.
//
// Every socket is thread-safe: send() and recv() may be called from different
// threads. Each connection is serviced by its own reader thread which feeds a
// per-socket inbox.

#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kernelforge::zmtp {

using Frame = std::string;
using Multipart = std::vector<Frame>;

enum class SocketType { kRouter, kDealer, kPub, kSub, kRep, kReq };

std::string_view socket_type_name(SocketType type);

// True when a peer advertising `peer` may talk to a socket of type `self`.
bool compatible(SocketType self, std::string_view peer);

class Socket {
 public:
  // `identity` is advertised to peers in the READY handshake (DEALER, REQ and
  // ROUTER only). ROUTER peers use it as the routing id when nonempty.
  explicit Socket(SocketType type, std::string identity = {});
  ~Socket();

  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  SocketType type() const;

  // Listens on host:port. Port 0 picks an ephemeral port. Returns the bound
  // port. Throws Error(kTransport) when the address is unavailable.
  std::uint16_t bind(const std::string& host, std::uint16_t port);

  // Connects and completes the handshake, retrying refused connections until
  // `timeout` elapses. Throws Error(kTimeout) on expiry.
  void connect(const std::string& host, std::uint16_t port,
               std::chrono::milliseconds timeout);

  // ROUTER/REP: the first frame selects the peer and is not transmitted.
  // PUB: delivered to every peer whose subscription prefixes the first frame.
  // REQ: an empty delimiter frame is prepended.
  // Returns false when no peer could take the message.
  bool send(const Multipart& message);

  // ROUTER/REP: the peer's routing id is prepended as the first frame.
  // REQ: the leading empty delimiter is stripped.
  // Returns nullopt on timeout or after close().
  std::optional<Multipart> recv(std::chrono::milliseconds timeout);

  // SUB only. Sent to current and future peers.
  void subscribe(std::string_view prefix);

  std::size_t peer_count() const;

  // Idempotent. Unblocks pending recv() calls.
  void close();

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

}  // namespace kernelforge::zmtp
