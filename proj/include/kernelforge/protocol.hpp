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

// The language-facing side of a kernel: what a DSL must provide, and the
// server skeleton that maps protocol requests onto it.

#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kernelforge/wire.hpp"

namespace kernelforge::protocol {

using json = nlohmann::json;

struct SourceSpan {
  std::size_t begin = 0;  // byte offsets, end exclusive
  std::size_t end = 0;
  int line = 1;    // 1-based
  int column = 1;  // 1-based

  friend bool operator==(const SourceSpan&, const SourceSpan&) = default;
};

struct Diagnostic {
  std::string message;
  std::optional<SourceSpan> location;

  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

// One line per diagnostic, e.g. "Parse error at 1:5".
std::string render(const Diagnostic& diagnostic);

// MIME type -> payload.
using MimeBundle = std::map<std::string, std::string>;
using Metadata = std::map<std::string, std::string>;

struct ExecutionResult {
  MimeBundle outputs;
  std::vector<Diagnostic> diagnostics;

  bool failed() const { return outputs.empty() && !diagnostics.empty(); }
};

struct CompletionResult {
  std::size_t position = 0;
  std::vector<std::string> suggestions;
};

enum class Completeness { kComplete, kIncomplete, kInvalid };

std::string_view to_string(Completeness c);

// A DSL packaged as plain functions. `completor` receives the text up to the
// cursor. Either optional member may be empty.
struct ReplDefinition {
  std::function<ExecutionResult(std::string_view)> handler;
  std::function<CompletionResult(std::string_view)> completor;
  std::function<Completeness(std::string_view)> is_complete;
};

using ReplFactory = std::function<ReplDefinition()>;

using OutputSink = std::function<void(std::string_view)>;

// Operations every language backend provides to the kernel.
class LanguageProtocol {
 public:
  virtual ~LanguageProtocol() = default;

  virtual void initialize(OutputSink out, OutputSink err) = 0;
  virtual std::string prompt() const = 0;

  // Writes outputs into `output` only. Returned diagnostics describe a failed
  // or partially failed execution.
  virtual std::vector<Diagnostic> handle_input(std::string_view line,
                                               MimeBundle& output,
                                               Metadata& metadata) = 0;
  virtual void handle_reset() = 0;

  virtual bool supports_completion() const = 0;
  virtual bool print_space_after_full_completion() const { return false; }
  virtual CompletionResult complete_fragment(std::string_view line,
                                             std::size_t cursor) = 0;

  // Must not mutate language state.
  virtual Completeness is_statement_complete(std::string_view text) const = 0;

  // These three may be called from the control thread: set flags only.
  virtual void cancel_running() {}
  virtual void terminate() {}
  virtual void stack_trace_requested() {}

  virtual void stop() = 0;
};

// Wraps a ReplDefinition factory. Reset re-invokes the factory.
class ReplAdapter final : public LanguageProtocol {
 public:
  explicit ReplAdapter(ReplFactory factory, std::string prompt = "> ");

  void initialize(OutputSink out, OutputSink err) override;
  std::string prompt() const override { return prompt_; }
  std::vector<Diagnostic> handle_input(std::string_view line, MimeBundle& output,
                                       Metadata& metadata) override;
  void handle_reset() override;
  bool supports_completion() const override;
  CompletionResult complete_fragment(std::string_view line,
                                     std::size_t cursor) override;
  Completeness is_statement_complete(std::string_view text) const override;
  void cancel_running() override { cancel_requested_ = true; }
  void terminate() override { cancel_requested_ = true; }
  void stop() override { stopped_ = true; }

  bool stopped() const { return stopped_; }

 private:
  ReplFactory factory_;
  ReplDefinition repl_;
  std::string prompt_;
  OutputSink out_;
  OutputSink err_;
  std::atomic<bool> cancel_requested_{false};
  std::atomic<bool> stopped_{false};
};

std::unique_ptr<LanguageProtocol> adapt_repl(ReplFactory factory);

// Static facts reported in kernel_info_reply.
struct LanguageInfo {
  std::string name;
  std::string version = "1.0";
  std::string mimetype = "text/plain";
  std::string file_extension = ".txt";
  std::string codemirror_mode;
  std::string banner;
};

struct HistoryEntry {
  int execution_count = 0;
  std::string code;
};

// Text written to the language's stdout/stderr sinks, drained into stream
// messages after each execution.
struct StreamCapture {
  std::string out;
  std::string err;
};

struct SessionState {
  int execution_count = 1;  // count assigned to the next non-silent execution
  std::vector<HistoryEntry> history;
  std::unique_ptr<LanguageProtocol> language;
  LanguageInfo info;
  std::shared_ptr<StreamCapture> streams = std::make_shared<StreamCapture>();
};

// Initializes `language` with sinks feeding the session's stream capture.
SessionState make_session(std::unique_ptr<LanguageProtocol> language,
                          LanguageInfo info);

// Emits iopub messages parented to one request, recording them as it goes.
class IopubEmitter {
 public:
  IopubEmitter(const wire::MessageFactory& factory, const wire::WireMessage& parent,
               wire::Publisher forward = {});

  void emit(std::string msg_type, json content);
  void status(std::string_view state);

  const std::vector<wire::WireMessage>& emitted() const { return emitted_; }

 private:
  const wire::MessageFactory& factory_;
  const wire::WireMessage& parent_;
  wire::Publisher forward_;
  std::vector<wire::WireMessage> emitted_;
};

json process_execute_request(const json& content, SessionState& state,
                             IopubEmitter& iopub);
json process_complete_request(const json& content, SessionState& state);
json process_is_complete_request(const json& content, const SessionState& state);
json process_kernel_info_request(const SessionState& state);
json process_history_request(const SessionState& state);
json process_inspect_request(const json& content);
json process_comm_info_request(const json& content);
// Calls language.stop(); the caller stops the service.
json process_shutdown_request(const json& content, SessionState& state);

struct DispatchResult {
  std::optional<wire::WireMessage> reply;
  std::vector<wire::WireMessage> iopub;
  bool shutdown = false;
};

// Routes by msg_type. Unknown types produce no reply and no iopub traffic.
// iopub messages are forwarded to `publish` as they are produced, and also
// returned.
DispatchResult dispatch(const wire::WireMessage& msg, SessionState& state,
                        const wire::MessageFactory& factory,
                        const wire::Publisher& publish = {});

// Binds a SessionState to the service threads. Shell requests are
// serialized; shutdown_request on control bypasses the shell lock.
class KernelServer {
 public:
  KernelServer(std::unique_ptr<LanguageProtocol> language, LanguageInfo info);

  wire::Outcome handle(wire::Channel channel, const wire::WireMessage& msg,
                       const wire::Publisher& publish);

  wire::Dispatcher dispatcher();

  const wire::MessageFactory& factory() const { return factory_; }

 private:
  std::mutex mu_;
  SessionState state_;
  wire::MessageFactory factory_;
};

}  // namespace kernelforge::protocol
