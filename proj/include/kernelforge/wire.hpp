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

// Jupyter wire protocol: connection files, signed multipart framing and the
// five-channel kernel service loop.

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kernelforge/zmtp.hpp"

namespace kernelforge::wire {

using json = nlohmann::json;

inline constexpr std::string_view kProtocolVersion = "5.3";
inline constexpr std::string_view kDelimiter = "<IDS|MSG>";

struct ConnectionInfo {
  std::string transport = "tcp";
  std::string ip = "127.0.0.1";
  std::uint16_t shell_port = 0;
  std::uint16_t iopub_port = 0;
  std::uint16_t stdin_port = 0;
  std::uint16_t control_port = 0;
  std::uint16_t hb_port = 0;
  std::string key;
  std::string signature_scheme = "hmac-sha256";
  std::optional<std::string> kernel_name;

  friend bool operator==(const ConnectionInfo&, const ConnectionInfo&) = default;
};

// Throws Error(kInvalidArgument) naming the violated invariant.
void validate(const ConnectionInfo& info);

ConnectionInfo connection_info_from_json(const json& object);
json to_json(const ConnectionInfo& info);

// Errors: kNotFound (missing file), kParse (malformed JSON),
// kInvalidArgument (missing key, bad port, unsupported signature scheme).
ConnectionInfo parse_connection_file(const std::filesystem::path& path);
void write_connection_file(const std::filesystem::path& path,
                           const ConnectionInfo& info);

struct MessageHeader {
  std::string msg_id;
  std::string session;
  std::string username;
  std::string date;
  std::string msg_type;
  std::string version{kProtocolVersion};

  friend bool operator==(const MessageHeader&, const MessageHeader&) = default;
};

json to_json(const MessageHeader& header);
// Requires msg_id and msg_type; other fields default to "".
MessageHeader header_from_json(const json& object);

struct WireMessage {
  std::vector<std::string> identities;
  MessageHeader header;
  std::optional<MessageHeader> parent_header;
  json metadata = json::object();
  json content = json::object();
  std::vector<std::string> buffers;

  friend bool operator==(const WireMessage&, const WireMessage&) = default;
};

// Known message names. Anything else is routed as unknown.
bool is_known_msg_type(std::string_view msg_type);

// Lowercase hex HMAC-SHA256 of the concatenated parts.
std::string hmac_sha256_hex(std::string_view key,
                            const std::vector<std::string>& parts);

// Signature over serialized header, parent_header, metadata, content.
std::string sign(const WireMessage& msg, std::string_view key);

// Frames: identities..., "<IDS|MSG>", signature, header, parent, metadata,
// content, buffers... An empty key leaves the signature frame empty.
zmtp::Multipart encode(const WireMessage& msg, std::string_view key);

// Decodes and authenticates. Errors: kProtocol for a missing delimiter or a
// malformed part, kSignature on mismatch. An empty key disables checking.
WireMessage verify(const zmtp::Multipart& frames, std::string_view key);

// Constant-time comparison of equal-length strings.
bool digest_equal(std::string_view a, std::string_view b);

std::string new_uuid();
// ISO-8601 UTC with microseconds and a trailing "Z".
std::string utc_timestamp();

// Builds headers for one session and derives replies and broadcasts.
class MessageFactory {
 public:
  explicit MessageFactory(std::string username = "kernel",
                          std::string session = new_uuid());

  const std::string& session() const { return session_; }

  MessageHeader header(std::string msg_type) const;

  WireMessage request(std::string msg_type, json content) const;
  // Identities are copied so the router can address the requester.
  WireMessage reply(const WireMessage& request, std::string msg_type,
                    json content) const;
  // For iopub. The topic frame is the msg_type.
  WireMessage broadcast(const WireMessage& parent, std::string msg_type,
                        json content) const;

 private:
  std::string username_;
  std::string session_;
};

enum class Channel { kShell, kControl, kStdin, kIopub, kHeartbeat };

std::string_view channel_name(Channel channel);

using Publisher = std::function<void(WireMessage)>;

struct Outcome {
  std::optional<WireMessage> reply;
  bool stop = false;  // shut the service down once the reply is out
};

// Invoked with each verified shell or control message. iopub traffic goes
// through `publish` while the handler runs.
using Dispatcher =
    std::function<Outcome(Channel, const WireMessage&, const Publisher& publish)>;

// Echoes every frame received on `socket` until stop is requested or the
// socket is closed.
void heartbeat_loop(zmtp::Socket& socket, std::stop_token stop);

// The five bound channels plus their service threads.
class KernelService {
 public:
  // Binds every channel. Throws Error(kTransport) when a port is taken.
  KernelService(ConnectionInfo info, Dispatcher dispatcher);
  ~KernelService();

  KernelService(const KernelService&) = delete;
  KernelService& operator=(const KernelService&) = delete;

  const ConnectionInfo& connection() const;

  void publish(WireMessage message);

  // Blocks until stop() or a dispatcher-requested shutdown.
  void wait();
  bool wait_for(std::chrono::milliseconds timeout);
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::unique_ptr<KernelService> run_channels(const ConnectionInfo& info,
                                            Dispatcher dispatcher);

}  // namespace kernelforge::wire
