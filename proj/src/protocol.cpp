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

#include "kernelforge/protocol.hpp"

#include <algorithm>
#include <set>

#include <spdlog/spdlog.h>

#include "kernelforge/version.hpp"

namespace kernelforge::protocol {

std::string render(const Diagnostic& diagnostic) {
  std::string out = diagnostic.message;
  if (diagnostic.location) {
    out += " at " + std::to_string(diagnostic.location->line) + ":" +
           std::to_string(diagnostic.location->column);
  }
  return out;
}

std::string_view to_string(Completeness c) {
  switch (c) {
    case Completeness::kComplete: return "complete";
    case Completeness::kIncomplete: return "incomplete";
    case Completeness::kInvalid: return "invalid";
  }
  return "unknown";
}

ReplAdapter::ReplAdapter(ReplFactory factory, std::string prompt)
    : factory_(std::move(factory)), repl_(factory_()), prompt_(std::move(prompt)) {}

void ReplAdapter::initialize(OutputSink out, OutputSink err) {
  out_ = std::move(out);
  err_ = std::move(err);
}

std::vector<Diagnostic> ReplAdapter::handle_input(std::string_view line,
                                                  MimeBundle& output,
                                                  Metadata& /*metadata*/) {
  cancel_requested_ = false;
  if (!repl_.handler) return {Diagnostic{"No handler registered", std::nullopt}};
  ExecutionResult result = repl_.handler(line);
  for (auto& [mime, payload] : result.outputs) output[mime] = std::move(payload);
  return std::move(result.diagnostics);
}

void ReplAdapter::handle_reset() { repl_ = factory_(); }

bool ReplAdapter::supports_completion() const {
  return static_cast<bool>(repl_.completor);
}

CompletionResult ReplAdapter::complete_fragment(std::string_view line,
                                                std::size_t cursor) {
  cursor = std::min(cursor, line.size());
  if (!repl_.completor) return {cursor, {}};
  CompletionResult result = repl_.completor(line.substr(0, cursor));
  result.position = std::min(result.position, cursor);
  std::set<std::string> seen;
  std::erase_if(result.suggestions,
                [&](const std::string& s) { return !seen.insert(s).second; });
  return result;
}

Completeness ReplAdapter::is_statement_complete(std::string_view text) const {
  if (!repl_.is_complete) return Completeness::kComplete;
  return repl_.is_complete(text);
}

std::unique_ptr<LanguageProtocol> adapt_repl(ReplFactory factory) {
  return std::make_unique<ReplAdapter>(std::move(factory));
}

IopubEmitter::IopubEmitter(const wire::MessageFactory& factory,
                           const wire::WireMessage& parent,
                           wire::Publisher forward)
    : factory_(factory), parent_(parent), forward_(std::move(forward)) {}

void IopubEmitter::emit(std::string msg_type, json content) {
  auto msg = factory_.broadcast(parent_, std::move(msg_type), std::move(content));
  emitted_.push_back(msg);
  if (forward_) forward_(std::move(msg));
}

void IopubEmitter::status(std::string_view state) {
  emit("status", {{"execution_state", state}});
}

namespace {

json error_content(const std::string& ename, const std::string& evalue,
                   const std::vector<std::string>& traceback) {
  return {{"ename", ename}, {"evalue", evalue}, {"traceback", traceback}};
}

std::size_t cursor_from(const json& content, std::size_t code_size) {
  auto it = content.find("cursor_pos");
  if (it == content.end() || !it->is_number_integer()) return code_size;
  auto pos = it->get<std::int64_t>();
  if (pos < 0) return 0;
  return std::min(static_cast<std::size_t>(pos), code_size);
}

std::string string_or_empty(const json& content, const char* key) {
  auto it = content.find(key);
  return it != content.end() && it->is_string() ? it->get<std::string>() : std::string();
}

}  // namespace

json process_execute_request(const json& content, SessionState& state,
                             IopubEmitter& iopub) {
  const std::string code = string_or_empty(content, "code");
  const bool silent = content.value("silent", false);

  int count = state.execution_count - 1;
  if (!silent) {
    count = state.execution_count++;
    state.history.push_back({count, code});
    iopub.emit("execute_input", {{"code", code}, {"execution_count", count}});
  }

  MimeBundle outputs;
  Metadata metadata;
  std::vector<Diagnostic> diagnostics;
  try {
    diagnostics = state.language->handle_input(code, outputs, metadata);
  } catch (const std::exception& e) {
    std::vector<std::string> traceback{std::string("InternalError: ") + e.what()};
    if (!silent) iopub.emit("error", error_content("InternalError", e.what(), traceback));
    json reply = error_content("InternalError", e.what(), traceback);
    reply["status"] = "error";
    reply["execution_count"] = count;
    return reply;
  }

  if (!silent) {
    if (!state.streams->out.empty()) {
      iopub.emit("stream", {{"name", "stdout"}, {"text", state.streams->out}});
    }
    if (!state.streams->err.empty()) {
      iopub.emit("stream", {{"name", "stderr"}, {"text", state.streams->err}});
    }
  }
  state.streams->out.clear();
  state.streams->err.clear();

  if (!silent && !outputs.empty()) {
    json meta = json::object();
    for (const auto& [k, v] : metadata) meta[k] = v;
    iopub.emit("execute_result",
               {{"execution_count", count}, {"data", outputs}, {"metadata", meta}});
  }

  std::vector<std::string> traceback;
  for (const auto& d : diagnostics) traceback.push_back(render(d));
  if (!silent && !diagnostics.empty()) {
    iopub.emit("error",
               error_content("DSLError", diagnostics.front().message, traceback));
  }

  if (outputs.empty() && !diagnostics.empty()) {
    json reply = error_content("DSLError", diagnostics.front().message, traceback);
    reply["status"] = "error";
    reply["execution_count"] = count;
    return reply;
  }
  return {{"status", "ok"},
          {"execution_count", count},
          {"payload", json::array()},
          {"user_expressions", json::object()}};
}

json process_complete_request(const json& content, SessionState& state) {
  const std::string code = string_or_empty(content, "code");
  const std::size_t cursor = cursor_from(content, code.size());
  json reply = {{"status", "ok"},
                {"matches", json::array()},
                {"cursor_start", cursor},
                {"cursor_end", cursor},
                {"metadata", json::object()}};
  if (!state.language->supports_completion()) return reply;
  CompletionResult result = state.language->complete_fragment(code, cursor);
  reply["matches"] = result.suggestions;
  reply["cursor_start"] = std::min(result.position, cursor);
  return reply;
}

json process_is_complete_request(const json& content, const SessionState& state) {
  auto status = state.language->is_statement_complete(string_or_empty(content, "code"));
  json reply = {{"status", to_string(status)}};
  if (status == Completeness::kIncomplete) reply["indent"] = "";
  return reply;
}

json process_kernel_info_request(const SessionState& state) {
  const LanguageInfo& info = state.info;
  return {
      {"status", "ok"},
      {"protocol_version", wire::kProtocolVersion},
      {"implementation", "kernelforge"},
      {"implementation_version", kVersion},
      {"language_info",
       {{"name", info.name},
        {"version", info.version},
        {"mimetype", info.mimetype},
        {"file_extension", info.file_extension},
        {"codemirror_mode", info.codemirror_mode}}},
      {"banner", info.banner},
      {"help_links", json::array()},
  };
}

json process_history_request(const SessionState& state) {
  json history = json::array();
  for (const auto& entry : state.history) {
    history.push_back({0, entry.execution_count, entry.code});
  }
  return {{"status", "ok"}, {"history", history}};
}

json process_inspect_request(const json& /*content*/) {
  return {{"status", "ok"},
          {"found", false},
          {"data", json::object()},
          {"metadata", json::object()}};
}

json process_comm_info_request(const json& /*content*/) {
  return {{"status", "ok"}, {"comms", json::object()}};
}

json process_shutdown_request(const json& content, SessionState& state) {
  const bool restart = content.value("restart", false);
  state.language->stop();
  return {{"status", "ok"}, {"restart", restart}};
}

SessionState make_session(std::unique_ptr<LanguageProtocol> language,
                          LanguageInfo info) {
  SessionState state;
  state.language = std::move(language);
  state.info = std::move(info);
  auto streams = state.streams;
  state.language->initialize(
      [streams](std::string_view s) { streams->out.append(s); },
      [streams](std::string_view s) { streams->err.append(s); });
  return state;
}

namespace {

std::string reply_type(const std::string& request_type) {
  constexpr std::string_view kSuffix = "_request";
  return request_type.substr(0, request_type.size() - kSuffix.size()) + "_reply";
}

bool handled(std::string_view type) {
  static const std::set<std::string, std::less<>> kHandled = {
      "execute_request",   "complete_request",    "is_complete_request",
      "inspect_request",   "history_request",     "comm_info_request",
      "kernel_info_request", "shutdown_request",  "interrupt_request",
  };
  return kHandled.count(type) != 0;
}

}  // namespace

DispatchResult dispatch(const wire::WireMessage& msg, SessionState& state,
                        const wire::MessageFactory& factory,
                        const wire::Publisher& publish) {
  DispatchResult result;
  const std::string& type = msg.header.msg_type;
  if (!handled(type)) {
    spdlog::warn("ignoring unsupported message type '{}'", type);
    return result;
  }
  IopubEmitter iopub(factory, msg, publish);
  iopub.status("busy");
  json content;
  try {
    if (type == "execute_request") {
      content = process_execute_request(msg.content, state, iopub);
    } else if (type == "complete_request") {
      content = process_complete_request(msg.content, state);
    } else if (type == "is_complete_request") {
      content = process_is_complete_request(msg.content, state);
    } else if (type == "inspect_request") {
      content = process_inspect_request(msg.content);
    } else if (type == "history_request") {
      content = process_history_request(state);
    } else if (type == "comm_info_request") {
      content = process_comm_info_request(msg.content);
    } else if (type == "kernel_info_request") {
      content = process_kernel_info_request(state);
    } else if (type == "interrupt_request") {
      state.language->cancel_running();
      content = {{"status", "ok"}};
    } else {
      content = process_shutdown_request(msg.content, state);
      result.shutdown = true;
    }
  } catch (const std::exception& e) {
    std::vector<std::string> traceback{std::string("InternalError: ") + e.what()};
    iopub.emit("error", error_content("InternalError", e.what(), traceback));
    content = error_content("InternalError", e.what(), traceback);
    content["status"] = "error";
  }
  iopub.status("idle");
  result.reply = factory.reply(msg, reply_type(type), std::move(content));
  result.iopub = iopub.emitted();
  return result;
}

KernelServer::KernelServer(std::unique_ptr<LanguageProtocol> language,
                           LanguageInfo info)
    : state_(make_session(std::move(language), std::move(info))) {}

wire::Outcome KernelServer::handle(wire::Channel channel,
                                   const wire::WireMessage& msg,
                                   const wire::Publisher& publish) {
  const std::string& type = msg.header.msg_type;
  // Control traffic that must get through while a cell is running. Only
  // flag-setting hooks on the language are touched here.
  if (channel == wire::Channel::kControl &&
      (type == "shutdown_request" || type == "interrupt_request")) {
    IopubEmitter iopub(factory_, msg, publish);
    iopub.status("busy");
    json content;
    if (type == "shutdown_request") {
      content = {{"status", "ok"}, {"restart", msg.content.value("restart", false)}};
      state_.language->stop();
    } else {
      state_.language->cancel_running();
      content = {{"status", "ok"}};
    }
    iopub.status("idle");
    return {factory_.reply(msg, reply_type(type), std::move(content)),
            type == "shutdown_request"};
  }
  std::lock_guard lock(mu_);
  DispatchResult result = dispatch(msg, state_, factory_, publish);
  return {std::move(result.reply), result.shutdown};
}

wire::Dispatcher KernelServer::dispatcher() {
  return [this](wire::Channel channel, const wire::WireMessage& msg,
                const wire::Publisher& publish) {
    return handle(channel, msg, publish);
  };
}

}  // namespace kernelforge::protocol
