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

#include "kernelforge/client.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <condition_variable>
#include <cstring>
#include <deque>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "kernelforge/error.hpp"

extern char** environ;

namespace kernelforge::client {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr milliseconds kSlice{10};

milliseconds remaining(Clock::time_point deadline) {
  auto left = std::chrono::duration_cast<milliseconds>(deadline - Clock::now());
  return std::max(left, milliseconds(0));
}

// Reserves `count` distinct free TCP ports on the loopback interface.
std::vector<std::uint16_t> free_ports(std::size_t count) {
  std::vector<int> fds;
  std::vector<std::uint16_t> ports;
  for (std::size_t i = 0; i < count; ++i) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (fd < 0 || ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      if (fd >= 0) ::close(fd);
      for (int f : fds) ::close(f);
      throw Error(ErrorCode::kTransport, "cannot reserve a free port");
    }
    socklen_t len = sizeof(addr);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    fds.push_back(fd);
    ports.push_back(ntohs(addr.sin_port));
  }
  for (int f : fds) ::close(f);
  return ports;
}

std::string bundle_text(const json& data) {
  if (data.contains("text/plain")) return data["text/plain"].get<std::string>();
  for (const auto& [mime, payload] : data.items()) {
    if (payload.is_string()) return payload.get<std::string>();
  }
  return {};
}

}  // namespace

std::optional<json> CollectedExecution::result_bundle() const {
  for (const auto& entry : trace) {
    if (entry.msg_type == "execute_result" || entry.msg_type == "display_data") {
      return entry.content.value("data", json::object());
    }
  }
  return std::nullopt;
}

std::optional<TraceEntry> CollectedExecution::error() const {
  for (const auto& entry : trace) {
    if (entry.msg_type == "error") return entry;
  }
  return std::nullopt;
}

json to_json(const CollectedExecution& execution) {
  json trace = json::array();
  for (const auto& entry : execution.trace) {
    trace.push_back({{"msg_type", entry.msg_type}, {"content", entry.content}});
  }
  return {{"code", execution.code},
          {"status", execution.status},
          {"execution_count", execution.execution_count},
          {"reply", execution.reply},
          {"trace", trace}};
}

bool Transcript::failed() const {
  return std::any_of(entries.begin(), entries.end(),
                     [](const TranscriptEntry& e) { return e.error; });
}

std::string Transcript::to_string() const {
  std::ostringstream out;
  for (const auto& e : entries) {
    const std::string n = std::to_string(e.execution_count);
    out << "In[" << n << "]: " << e.input << "\n";
    if (e.output.empty() && !e.error) continue;
    const std::string label = (e.error ? "Err[" : "Out[") + n + "]: ";
    std::istringstream lines(e.output);
    std::string line;
    bool first = true;
    while (std::getline(lines, line)) {
      out << (first ? label : std::string(label.size(), ' ')) << line << "\n";
      first = false;
    }
    if (first) out << label << "\n";
  }
  return out.str();
}

struct KernelClient::Impl {
  wire::ConnectionInfo info;
  wire::MessageFactory factory{"kernelforge-client"};
  zmtp::Socket shell{zmtp::SocketType::kDealer, factory.session()};
  zmtp::Socket control{zmtp::SocketType::kDealer, factory.session()};
  zmtp::Socket iopub{zmtp::SocketType::kSub};
  zmtp::Socket heartbeat{zmtp::SocketType::kReq};

  std::mutex mu;
  std::condition_variable cv;
  std::deque<wire::WireMessage> iopub_queue;
  std::jthread drain;

  std::mutex call_mu;  // one request/reply exchange at a time

  pid_t child = -1;
  std::optional<fs::path> connection_file;
  std::optional<fs::path> log_file;

  void start_drain() {
    drain = std::jthread([this](std::stop_token stop) {
      while (!stop.stop_requested()) {
        auto frames = iopub.recv(milliseconds(50));
        if (!frames) continue;
        try {
          auto msg = wire::verify(*frames, info.key);
          {
            std::lock_guard lock(mu);
            iopub_queue.push_back(std::move(msg));
          }
          cv.notify_all();
        } catch (const Error& e) {
          spdlog::warn("client: dropping iopub message: {}", e.what());
        }
      }
    });
  }

  // Next iopub message parented to `msg_id`; others are discarded.
  std::optional<wire::WireMessage> next_iopub(const std::string& msg_id,
                                              milliseconds wait) {
    std::unique_lock lock(mu);
    const auto deadline = Clock::now() + wait;
    for (;;) {
      while (!iopub_queue.empty()) {
        wire::WireMessage msg = std::move(iopub_queue.front());
        iopub_queue.pop_front();
        if (msg.parent_header && msg.parent_header->msg_id == msg_id) return msg;
      }
      if (cv.wait_until(lock, deadline) == std::cv_status::timeout &&
          iopub_queue.empty()) {
        return std::nullopt;
      }
    }
  }

  zmtp::Socket& socket_for(wire::Channel channel) {
    return channel == wire::Channel::kControl ? control : shell;
  }

  // Next reply on `socket` parented to `msg_id`. Replies to other requests
  // are discarded.
  std::optional<wire::WireMessage> next_reply(zmtp::Socket& socket,
                                              const std::string& msg_id,
                                              milliseconds wait) {
    const auto deadline = Clock::now() + wait;
    for (;;) {
      auto frames = socket.recv(remaining(deadline));
      if (!frames) return std::nullopt;
      try {
        auto msg = wire::verify(*frames, info.key);
        if (msg.parent_header && msg.parent_header->msg_id == msg_id) return msg;
        spdlog::debug("client: ignoring reply to {}",
                      msg.parent_header ? msg.parent_header->msg_id : "?");
      } catch (const Error& e) {
        spdlog::warn("client: dropping reply: {}", e.what());
      }
    }
  }

  bool wait_exit(milliseconds wait) {
    if (child <= 0) return true;
    const auto deadline = Clock::now() + wait;
    for (;;) {
      int status = 0;
      pid_t done = ::waitpid(child, &status, WNOHANG);
      if (done == child || (done < 0 && errno == ECHILD)) {
        child = -1;
        return true;
      }
      if (Clock::now() >= deadline) return false;
      std::this_thread::sleep_for(milliseconds(10));
    }
  }

  void reap_child() {
    if (child <= 0) return;
    if (!wait_exit(milliseconds(0))) {
      ::kill(child, SIGTERM);
      if (!wait_exit(milliseconds(2000))) {
        ::kill(child, SIGKILL);
        wait_exit(milliseconds(2000));
      }
    }
  }

  ~Impl() {
    drain = {};
    for (auto* s : {&shell, &control, &iopub, &heartbeat}) s->close();
    reap_child();
    std::error_code ec;
    if (connection_file) fs::remove(*connection_file, ec);
    if (log_file) fs::remove(*log_file, ec);
  }
};

KernelClient::KernelClient() : impl_(std::make_unique<Impl>()) {}

KernelClient::~KernelClient() = default;

std::unique_ptr<KernelClient> KernelClient::connect(const wire::ConnectionInfo& info,
                                                    milliseconds timeout) {
  std::unique_ptr<KernelClient> client(new KernelClient());
  auto& s = *client->impl_;
  s.info = info;
  const auto deadline = Clock::now() + timeout;
  try {
    s.iopub.subscribe("");
    s.heartbeat.connect(info.ip, info.hb_port, remaining(deadline));
    s.shell.connect(info.ip, info.shell_port, remaining(deadline));
    s.control.connect(info.ip, info.control_port, remaining(deadline));
    s.iopub.connect(info.ip, info.iopub_port, remaining(deadline));
  } catch (const Error& e) {
    throw Error(ErrorCode::kTimeout, std::string("kernel unreachable: ") + e.what());
  }
  s.start_drain();

  if (!client->ping("kernelforge-liveness", remaining(deadline))) {
    throw Error(ErrorCode::kTimeout, "kernel unreachable: no heartbeat echo");
  }

  // The publisher may not have registered our subscription yet. Poke the
  // kernel until its iopub traffic reaches us.
  while (Clock::now() < deadline) {
    auto msg = s.factory.request("kernel_info_request", json::object());
    s.shell.send(wire::encode(msg, info.key));
    auto reply = s.next_reply(s.shell, msg.header.msg_id, remaining(deadline));
    if (!reply) break;
    if (s.next_iopub(msg.header.msg_id, std::min(remaining(deadline), milliseconds(200)))) {
      // Drain the rest of this request's bracket.
      while (s.next_iopub(msg.header.msg_id, milliseconds(20))) {
      }
      return client;
    }
  }
  throw Error(ErrorCode::kTimeout, "kernel unreachable: no iopub traffic");
}

std::unique_ptr<KernelClient> KernelClient::spawn(const std::string& language,
                                                  const fs::path& launcher,
                                                  milliseconds timeout) {
  auto ports = free_ports(5);
  wire::ConnectionInfo info;
  info.ip = "127.0.0.1";
  info.shell_port = ports[0];
  info.iopub_port = ports[1];
  info.stdin_port = ports[2];
  info.control_port = ports[3];
  info.hb_port = ports[4];
  info.key = wire::new_uuid();
  info.kernel_name = language;

  const fs::path file =
      fs::temp_directory_path() / ("kernelforge-" + wire::new_uuid() + ".json");
  wire::write_connection_file(file, info);
  const fs::path log = fs::path(file).replace_extension(".log");

  std::vector<std::string> argv = {launcher.string(), "serve", "--connection-file",
                                   file.string(), "--language", language};
  std::vector<char*> args;
  for (auto& a : argv) args.push_back(a.data());
  args.push_back(nullptr);

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, log.c_str(),
                                   O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_adddup2(&actions, STDOUT_FILENO, STDERR_FILENO);
  pid_t pid = -1;
  int rc = ::posix_spawn(&pid, args[0], &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) {
    std::error_code ec;
    fs::remove(file, ec);
    throw Error(ErrorCode::kEnvironment, "cannot launch " + launcher.string() + ": " +
                                             std::strerror(rc));
  }
  spdlog::debug("spawned kernel pid {} with {}", pid, file.string());

  std::unique_ptr<KernelClient> client;
  try {
    client = connect(info, timeout);
  } catch (...) {
    ::kill(pid, SIGKILL);
    ::waitpid(pid, nullptr, 0);
    std::error_code ec;
    fs::remove(file, ec);
    fs::remove(log, ec);
    throw;
  }
  client->impl_->child = pid;
  client->impl_->connection_file = file;
  client->impl_->log_file = log;
  return client;
}

const wire::ConnectionInfo& KernelClient::connection() const { return impl_->info; }

std::optional<fs::path> KernelClient::connection_file() const {
  return impl_->connection_file;
}

wire::WireMessage KernelClient::request(wire::Channel channel,
                                        const std::string& msg_type, json content,
                                        milliseconds timeout) {
  std::lock_guard lock(impl_->call_mu);
  auto msg = impl_->factory.request(msg_type, std::move(content));
  auto& socket = impl_->socket_for(channel);
  if (!socket.send(wire::encode(msg, impl_->info.key))) {
    throw Error(ErrorCode::kTransport, "kernel not connected");
  }
  auto reply = impl_->next_reply(socket, msg.header.msg_id, timeout);
  if (!reply) {
    throw Error(ErrorCode::kTimeout, "no " + msg_type + " reply within " +
                                         std::to_string(timeout.count()) + " ms");
  }
  return std::move(*reply);
}

CollectedExecution KernelClient::exec_collect(const std::string& code,
                                              milliseconds timeout, bool silent) {
  std::lock_guard lock(impl_->call_mu);
  auto& s = *impl_;
  auto msg = s.factory.request("execute_request", {{"code", code},
                                                   {"silent", silent},
                                                   {"store_history", !silent},
                                                   {"user_expressions", json::object()},
                                                   {"allow_stdin", false},
                                                   {"stop_on_error", true}});
  if (!s.shell.send(wire::encode(msg, s.info.key))) {
    throw Error(ErrorCode::kTransport, "kernel not connected");
  }
  const std::string& id = msg.header.msg_id;
  const auto deadline = Clock::now() + timeout;

  CollectedExecution out;
  out.code = code;
  bool have_reply = false;
  bool idle = false;
  bool busy = false;
  while (!(have_reply && idle)) {
    if (Clock::now() >= deadline) {
      throw Error(ErrorCode::kTimeout, "execute_request timed out");
    }
    if (!have_reply) {
      if (auto reply = s.next_reply(s.shell, id, kSlice)) {
        out.reply = reply->content;
        out.status = reply->content.value("status", "");
        out.execution_count = reply->content.value("execution_count", 0);
        have_reply = true;
      }
    }
    while (!idle) {
      auto next = s.next_iopub(id, have_reply ? remaining(deadline) : kSlice);
      if (!next) break;
      const std::string& type = next->header.msg_type;
      if (type == "status" && next->content.value("execution_state", "") == "busy") {
        busy = true;
      }
      if (!busy) continue;
      out.trace.push_back({type, next->content});
      if (type == "status" && next->content.value("execution_state", "") == "idle") {
        idle = true;
      }
    }
  }
  return out;
}

json KernelClient::kernel_info(milliseconds timeout) {
  return request(wire::Channel::kShell, "kernel_info_request", json::object(), timeout)
      .content;
}

json KernelClient::complete(const std::string& code, std::size_t cursor,
                            milliseconds timeout) {
  return request(wire::Channel::kShell, "complete_request",
                 {{"code", code}, {"cursor_pos", cursor}}, timeout)
      .content;
}

json KernelClient::is_complete(const std::string& code, milliseconds timeout) {
  return request(wire::Channel::kShell, "is_complete_request", {{"code", code}}, timeout)
      .content;
}

json KernelClient::history(milliseconds timeout) {
  return request(wire::Channel::kShell, "history_request",
                 {{"output", false}, {"raw", true}, {"hist_access_type", "tail"},
                  {"n", 1000}},
                 timeout)
      .content;
}

json KernelClient::shutdown(bool restart, milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  json content = request(wire::Channel::kControl, "shutdown_request",
                         {{"restart", restart}}, timeout)
                     .content;
  if (impl_->child > 0 && !impl_->wait_exit(remaining(deadline))) {
    throw Error(ErrorCode::kTimeout, "kernel did not exit after shutdown_reply");
  }
  return content;
}

std::optional<std::string> KernelClient::ping(const std::string& payload,
                                              milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  if (!impl_->heartbeat.send({payload})) return std::nullopt;
  for (;;) {
    auto echo = impl_->heartbeat.recv(remaining(deadline));
    if (!echo) return std::nullopt;
    // Late echoes of earlier pings are skipped.
    if (echo->size() == 1 && echo->front() == payload) return echo->front();
  }
}

Transcript KernelClient::run_cells(const std::vector<std::string>& cells,
                                   milliseconds timeout) {
  Transcript transcript;
  for (const auto& cell : cells) {
    if (cell.find_first_not_of(" \t\r") == std::string::npos) continue;
    CollectedExecution run = exec_collect(cell, timeout);
    TranscriptEntry entry;
    entry.execution_count = run.execution_count;
    entry.input = cell;
    if (run.status != "ok") {
      entry.error = true;
      if (auto err = run.error()) {
        std::string text;
        for (const auto& line : err->content.value("traceback", json::array())) {
          if (!text.empty()) text += "\n";
          text += line.get<std::string>();
        }
        entry.output = text.empty() ? err->content.value("evalue", "") : text;
      } else {
        entry.output = run.reply.value("evalue", "error");
      }
    } else if (auto bundle = run.result_bundle()) {
      entry.output = bundle_text(*bundle);
    }
    transcript.entries.push_back(std::move(entry));
  }
  return transcript;
}

Transcript KernelClient::run_script(const fs::path& path, milliseconds timeout) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "script not found: " + path.string());
  std::vector<std::string> cells;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    cells.push_back(line);
  }
  return run_cells(cells, timeout);
}

bool KernelClient::kernel_exited(milliseconds wait) { return impl_->wait_exit(wait); }

}  // namespace kernelforge::client
