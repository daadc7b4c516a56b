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

#include "kernelforge/wire.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <algorithm>
#include <array>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "kernelforge/error.hpp"

namespace kernelforge::wire {

namespace {

constexpr auto kPollInterval = std::chrono::milliseconds(50);

std::uint16_t port_field(const json& object, const char* name) {
  if (!object.contains(name)) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string("missing required key: ") + name);
  }
  const auto& value = object.at(name);
  if (!value.is_number_integer()) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string("port must be an integer: ") + name);
  }
  auto port = value.get<std::int64_t>();
  if (port < 1 || port > 65535) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string("port out of range: ") + name);
  }
  return static_cast<std::uint16_t>(port);
}

std::string string_field(const json& object, const char* name) {
  if (!object.contains(name)) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string("missing required key: ") + name);
  }
  const auto& value = object.at(name);
  if (!value.is_string()) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string("expected a string for key: ") + name);
  }
  return value.get<std::string>();
}

std::string optional_string(const json& object, const char* name) {
  auto it = object.find(name);
  if (it == object.end() || !it->is_string()) return {};
  return it->get<std::string>();
}

json parse_part(const std::string& frame) {
  json value = json::parse(frame, nullptr, false);
  if (value.is_discarded() || !value.is_object()) {
    throw Error(ErrorCode::kProtocol, "malformed part");
  }
  return value;
}

std::mt19937_64& rng() {
  thread_local std::mt19937_64 engine([] {
    std::random_device rd;
    std::seed_seq seq{rd(), rd(), rd(), rd()};
    return std::mt19937_64(seq);
  }());
  return engine;
}

}  // namespace

void validate(const ConnectionInfo& info) {
  if (info.transport != "tcp") {
    throw Error(ErrorCode::kInvalidArgument,
                "unsupported transport: " + info.transport);
  }
  if (info.signature_scheme != "hmac-sha256") {
    throw Error(ErrorCode::kInvalidArgument,
                "unsupported signature scheme: " + info.signature_scheme);
  }
  std::set<std::uint16_t> ports{info.shell_port, info.iopub_port,
                                info.stdin_port, info.control_port, info.hb_port};
  if (ports.count(0) != 0) {
    throw Error(ErrorCode::kInvalidArgument, "port out of range: 0");
  }
  if (ports.size() != 5) {
    throw Error(ErrorCode::kInvalidArgument, "channel ports must be distinct");
  }
}

ConnectionInfo connection_info_from_json(const json& object) {
  if (!object.is_object()) {
    throw Error(ErrorCode::kParse, "connection file is not a JSON object");
  }
  ConnectionInfo info;
  info.transport = string_field(object, "transport");
  info.ip = string_field(object, "ip");
  info.shell_port = port_field(object, "shell_port");
  info.iopub_port = port_field(object, "iopub_port");
  info.stdin_port = port_field(object, "stdin_port");
  info.control_port = port_field(object, "control_port");
  info.hb_port = port_field(object, "hb_port");
  info.key = string_field(object, "key");
  info.signature_scheme = string_field(object, "signature_scheme");
  if (auto it = object.find("kernel_name"); it != object.end() && it->is_string()) {
    info.kernel_name = it->get<std::string>();
  }
  validate(info);
  return info;
}

json to_json(const ConnectionInfo& info) {
  json out = {
      {"transport", info.transport},
      {"ip", info.ip},
      {"shell_port", info.shell_port},
      {"iopub_port", info.iopub_port},
      {"stdin_port", info.stdin_port},
      {"control_port", info.control_port},
      {"hb_port", info.hb_port},
      {"key", info.key},
      {"signature_scheme", info.signature_scheme},
  };
  if (info.kernel_name) out["kernel_name"] = *info.kernel_name;
  return out;
}

ConnectionInfo parse_connection_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kNotFound,
                "connection file not found: " + path.string());
  }
  json object = json::parse(in, nullptr, false);
  if (object.is_discarded()) {
    throw Error(ErrorCode::kParse, "malformed JSON in " + path.string());
  }
  return connection_info_from_json(object);
}

void write_connection_file(const std::filesystem::path& path,
                           const ConnectionInfo& info) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << to_json(info).dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

json to_json(const MessageHeader& header) {
  return {
      {"msg_id", header.msg_id},     {"session", header.session},
      {"username", header.username}, {"date", header.date},
      {"msg_type", header.msg_type}, {"version", header.version},
  };
}

MessageHeader header_from_json(const json& object) {
  if (!object.is_object() || !object.contains("msg_id") ||
      !object.contains("msg_type")) {
    throw Error(ErrorCode::kProtocol, "malformed part: header");
  }
  MessageHeader h;
  h.msg_id = optional_string(object, "msg_id");
  h.session = optional_string(object, "session");
  h.username = optional_string(object, "username");
  h.date = optional_string(object, "date");
  h.msg_type = optional_string(object, "msg_type");
  h.version = optional_string(object, "version");
  if (h.msg_type.empty()) throw Error(ErrorCode::kProtocol, "malformed part: msg_type");
  return h;
}

bool is_known_msg_type(std::string_view msg_type) {
  static const std::set<std::string, std::less<>> known = {
      "execute_request",     "execute_reply",     "execute_input",
      "execute_result",      "complete_request",  "complete_reply",
      "is_complete_request", "is_complete_reply", "inspect_request",
      "inspect_reply",       "history_request",   "history_reply",
      "comm_info_request",   "comm_info_reply",   "kernel_info_request",
      "kernel_info_reply",   "shutdown_request",  "shutdown_reply",
      "interrupt_request",   "interrupt_reply",   "status",
      "stream",              "display_data",      "error",
  };
  return known.find(msg_type) != known.end();
}

std::string hmac_sha256_hex(std::string_view key,
                            const std::vector<std::string>& parts) {
  std::string data;
  for (const auto& p : parts) data += p;
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int size = 0;
  static const unsigned char kNoKey = 0;
  const void* key_ptr = key.empty() ? &kNoKey : static_cast<const void*>(key.data());
  if (HMAC(EVP_sha256(), key_ptr, static_cast<int>(key.size()),
           reinterpret_cast<const unsigned char*>(data.data()), data.size(),
           digest.data(), &size) == nullptr) {
    throw Error(ErrorCode::kInternal, "HMAC computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(size * 2);
  for (unsigned int i = 0; i < size; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0x0f]);
  }
  return hex;
}

namespace {

std::vector<std::string> signed_parts(const WireMessage& msg) {
  return {
      to_json(msg.header).dump(),
      msg.parent_header ? to_json(*msg.parent_header).dump() : std::string("{}"),
      msg.metadata.dump(),
      msg.content.dump(),
  };
}

}  // namespace

std::string sign(const WireMessage& msg, std::string_view key) {
  return hmac_sha256_hex(key, signed_parts(msg));
}

zmtp::Multipart encode(const WireMessage& msg, std::string_view key) {
  auto parts = signed_parts(msg);
  zmtp::Multipart frames;
  frames.reserve(msg.identities.size() + 6 + msg.buffers.size());
  frames.insert(frames.end(), msg.identities.begin(), msg.identities.end());
  frames.emplace_back(kDelimiter);
  frames.push_back(key.empty() ? std::string() : hmac_sha256_hex(key, parts));
  for (auto& p : parts) frames.push_back(std::move(p));
  frames.insert(frames.end(), msg.buffers.begin(), msg.buffers.end());
  return frames;
}

bool digest_equal(std::string_view a, std::string_view b) {
  // Digest length is public; only the contents need a constant-time compare.
  return a.size() == b.size() && CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

WireMessage verify(const zmtp::Multipart& frames, std::string_view key) {
  auto delim = std::find(frames.begin(), frames.end(), kDelimiter);
  if (delim == frames.end()) {
    throw Error(ErrorCode::kProtocol, "missing delimiter");
  }
  const auto start = static_cast<std::size_t>(delim - frames.begin());
  if (frames.size() < start + 6) {
    throw Error(ErrorCode::kProtocol, "malformed part: too few frames");
  }
  const std::string& signature = frames[start + 1];
  if (!key.empty()) {
    std::vector<std::string> parts(frames.begin() + static_cast<std::ptrdiff_t>(start + 2),
                                   frames.begin() + static_cast<std::ptrdiff_t>(start + 6));
    if (!digest_equal(hmac_sha256_hex(key, parts), signature)) {
      throw Error(ErrorCode::kSignature, "signature mismatch");
    }
  }
  WireMessage msg;
  msg.identities.assign(frames.begin(), delim);
  msg.header = header_from_json(parse_part(frames[start + 2]));
  json parent = parse_part(frames[start + 3]);
  if (!parent.empty()) {
    MessageHeader p;
    p.msg_id = optional_string(parent, "msg_id");
    p.session = optional_string(parent, "session");
    p.username = optional_string(parent, "username");
    p.date = optional_string(parent, "date");
    p.msg_type = optional_string(parent, "msg_type");
    p.version = optional_string(parent, "version");
    msg.parent_header = std::move(p);
  }
  msg.metadata = parse_part(frames[start + 4]);
  msg.content = parse_part(frames[start + 5]);
  msg.buffers.assign(frames.begin() + static_cast<std::ptrdiff_t>(start + 6), frames.end());
  return msg;
}

std::string new_uuid() {
  std::uniform_int_distribution<unsigned> byte(0, 255);
  std::array<unsigned char, 16> b{};
  for (auto& x : b) x = static_cast<unsigned char>(byte(rng()));
  b[6] = static_cast<unsigned char>((b[6] & 0x0f) | 0x40);
  b[8] = static_cast<unsigned char>((b[8] & 0x3f) | 0x80);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(36);
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (i == 4 || i == 6 || i == 8 || i == 10) out.push_back('-');
    out.push_back(kHex[b[i] >> 4]);
    out.push_back(kHex[b[i] & 0x0f]);
  }
  return out;
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::now();
  auto secs = std::chrono::time_point_cast<std::chrono::seconds>(now);
  auto micros =
      std::chrono::duration_cast<std::chrono::microseconds>(now - secs).count();
  std::time_t t = std::chrono::system_clock::to_time_t(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::size_t n = std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
  std::snprintf(buf + n, sizeof(buf) - n, ".%06lldZ", static_cast<long long>(micros));
  return buf;
}

MessageFactory::MessageFactory(std::string username, std::string session)
    : username_(std::move(username)), session_(std::move(session)) {}

MessageHeader MessageFactory::header(std::string msg_type) const {
  MessageHeader h;
  h.msg_id = new_uuid();
  h.session = session_;
  h.username = username_;
  h.date = utc_timestamp();
  h.msg_type = std::move(msg_type);
  return h;
}

WireMessage MessageFactory::request(std::string msg_type, json content) const {
  WireMessage m;
  m.header = header(std::move(msg_type));
  m.content = std::move(content);
  return m;
}

WireMessage MessageFactory::reply(const WireMessage& request,
                                  std::string msg_type, json content) const {
  WireMessage m;
  m.identities = request.identities;
  m.header = header(std::move(msg_type));
  m.parent_header = request.header;
  m.content = std::move(content);
  return m;
}

WireMessage MessageFactory::broadcast(const WireMessage& parent,
                                      std::string msg_type, json content) const {
  WireMessage m;
  m.identities = {msg_type};
  m.header = header(std::move(msg_type));
  m.parent_header = parent.header;
  m.content = std::move(content);
  return m;
}

std::string_view channel_name(Channel channel) {
  switch (channel) {
    case Channel::kShell: return "shell";
    case Channel::kControl: return "control";
    case Channel::kStdin: return "stdin";
    case Channel::kIopub: return "iopub";
    case Channel::kHeartbeat: return "heartbeat";
  }
  return "?";
}

void heartbeat_loop(zmtp::Socket& socket, std::stop_token stop) {
  while (!stop.stop_requested()) {
    auto frames = socket.recv(kPollInterval);
    if (!frames) continue;
    socket.send(*frames);
  }
}

struct KernelService::Impl {
  ConnectionInfo info;
  Dispatcher dispatcher;
  zmtp::Socket shell{zmtp::SocketType::kRouter};
  zmtp::Socket control{zmtp::SocketType::kRouter};
  zmtp::Socket stdin_socket{zmtp::SocketType::kRouter};
  zmtp::Socket iopub{zmtp::SocketType::kPub};
  zmtp::Socket heartbeat{zmtp::SocketType::kRep};

  std::mutex mu;
  std::condition_variable cv;
  std::deque<WireMessage> iopub_queue;
  bool stop_requested = false;
  bool torn_down = false;
  std::stop_source stop_source;
  std::mutex teardown_mu;

  std::jthread heartbeat_thread;
  std::jthread shell_thread;
  std::jthread control_thread;
  std::jthread iopub_thread;

  void request_stop() {
    {
      std::lock_guard lock(mu);
      stop_requested = true;
    }
    stop_source.request_stop();
    cv.notify_all();
  }

  void publish(WireMessage message) {
    {
      std::lock_guard lock(mu);
      iopub_queue.push_back(std::move(message));
    }
    cv.notify_all();
  }

  void iopub_loop() {
    for (;;) {
      std::unique_lock lock(mu);
      cv.wait(lock, [&] { return stop_requested || !iopub_queue.empty(); });
      if (iopub_queue.empty()) return;
      WireMessage next = std::move(iopub_queue.front());
      iopub_queue.pop_front();
      lock.unlock();
      iopub.send(encode(next, info.key));
    }
  }

  void request_loop(Channel channel, zmtp::Socket& socket, std::stop_token stop) {
    const Publisher publisher = [this](WireMessage m) { publish(std::move(m)); };
    while (!stop.stop_requested()) {
      auto frames = socket.recv(kPollInterval);
      if (!frames) continue;
      WireMessage request;
      try {
        request = verify(*frames, info.key);
      } catch (const Error& e) {
        spdlog::warn("{}: dropping message: {}", channel_name(channel), e.what());
        continue;
      }
      spdlog::debug("{}: {}", channel_name(channel), request.header.msg_type);
      Outcome outcome;
      try {
        outcome = dispatcher(channel, request, publisher);
      } catch (const std::exception& e) {
        spdlog::error("{}: handler for {} failed: {}", channel_name(channel),
                      request.header.msg_type, e.what());
        continue;
      } catch (...) {
        spdlog::error("{}: handler for {} failed", channel_name(channel),
                      request.header.msg_type);
        continue;
      }
      if (outcome.reply) socket.send(encode(*outcome.reply, info.key));
      if (outcome.stop) {
        request_stop();
        return;
      }
    }
  }

  void teardown() {
    std::lock_guard guard(teardown_mu);
    if (torn_down) return;
    request_stop();
    for (auto* t : {&heartbeat_thread, &shell_thread, &control_thread, &iopub_thread}) {
      if (t->joinable()) t->join();
    }
    for (auto* s : {&shell, &control, &stdin_socket, &iopub, &heartbeat}) s->close();
    std::lock_guard lock(mu);
    torn_down = true;
  }
};

KernelService::KernelService(ConnectionInfo info, Dispatcher dispatcher)
    : impl_(std::make_unique<Impl>()) {
  if (info.signature_scheme != "hmac-sha256") {
    throw Error(ErrorCode::kInvalidArgument,
                "unsupported signature scheme: " + info.signature_scheme);
  }
  if (info.key.empty()) {
    spdlog::warn("empty signing key: message authentication disabled");
  }
  impl_->dispatcher = std::move(dispatcher);
  auto& s = *impl_;
  try {
    info.shell_port = s.shell.bind(info.ip, info.shell_port);
    info.control_port = s.control.bind(info.ip, info.control_port);
    info.stdin_port = s.stdin_socket.bind(info.ip, info.stdin_port);
    info.iopub_port = s.iopub.bind(info.ip, info.iopub_port);
    info.hb_port = s.heartbeat.bind(info.ip, info.hb_port);
  } catch (...) {
    for (auto* sock : {&s.shell, &s.control, &s.stdin_socket, &s.iopub, &s.heartbeat}) {
      sock->close();
    }
    throw;
  }
  s.info = std::move(info);
  auto token = s.stop_source.get_token();
  s.heartbeat_thread = std::jthread([&s, token] { heartbeat_loop(s.heartbeat, token); });
  s.iopub_thread = std::jthread([&s] { s.iopub_loop(); });
  s.shell_thread = std::jthread(
      [&s, token] { s.request_loop(Channel::kShell, s.shell, token); });
  s.control_thread = std::jthread(
      [&s, token] { s.request_loop(Channel::kControl, s.control, token); });
  spdlog::info("kernel listening: shell={} iopub={} stdin={} control={} hb={}",
               s.info.shell_port, s.info.iopub_port, s.info.stdin_port,
               s.info.control_port, s.info.hb_port);
}

KernelService::~KernelService() { impl_->teardown(); }

const ConnectionInfo& KernelService::connection() const { return impl_->info; }

void KernelService::publish(WireMessage message) { impl_->publish(std::move(message)); }

void KernelService::wait() {
  {
    std::unique_lock lock(impl_->mu);
    impl_->cv.wait(lock, [&] { return impl_->stop_requested; });
  }
  impl_->teardown();
}

bool KernelService::wait_for(std::chrono::milliseconds timeout) {
  {
    std::unique_lock lock(impl_->mu);
    if (!impl_->cv.wait_for(lock, timeout, [&] { return impl_->stop_requested; })) {
      return false;
    }
  }
  impl_->teardown();
  return true;
}

void KernelService::stop() { impl_->teardown(); }

bool KernelService::running() const {
  std::lock_guard lock(impl_->mu);
  return !impl_->stop_requested;
}

std::unique_ptr<KernelService> run_channels(const ConnectionInfo& info,
                                            Dispatcher dispatcher) {
  return std::make_unique<KernelService>(info, std::move(dispatcher));
}

}  // namespace kernelforge::wire
