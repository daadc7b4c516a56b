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

// Headless protocol client: drives a kernel the way a notebook frontend
// would, for tests and scripting.

#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kernelforge/wire.hpp"

namespace kernelforge::client {

using json = nlohmann::json;
using std::chrono::milliseconds;

inline constexpr milliseconds kInfoTimeout{2000};
inline constexpr milliseconds kShutdownTimeout{5000};
inline constexpr milliseconds kExecuteTimeout{10000};

struct TraceEntry {
  std::string msg_type;
  json content;
};

struct CollectedExecution {
  std::string code;
  std::string status;  // execute_reply status
  int execution_count = 0;
  json reply;
  std::vector<TraceEntry> trace;  // busy ... idle, parented to the request

  // First execute_result/display_data bundle in the trace, if any.
  std::optional<json> result_bundle() const;
  std::optional<TraceEntry> error() const;
};

json to_json(const CollectedExecution& execution);

struct TranscriptEntry {
  int execution_count = 0;
  std::string input;
  std::string output;
  bool error = false;
};

struct Transcript {
  std::vector<TranscriptEntry> entries;

  bool failed() const;
  // "In[n]: code" / "Out[n]: text" (or "Err[n]: ...") lines.
  std::string to_string() const;
};

class KernelClient {
 public:
  // Attaches to a running kernel. Verifies liveness with one heartbeat echo
  // and waits until the iopub subscription delivers traffic.
  // Throws Error(kTimeout, "kernel unreachable").
  static std::unique_ptr<KernelClient> connect(const wire::ConnectionInfo& info,
                                               milliseconds timeout = kInfoTimeout);

  // Writes a fresh connection file, launches `<launcher> serve` and attaches.
  // The kernel process is owned by the client.
  static std::unique_ptr<KernelClient> spawn(const std::string& language,
                                             const std::filesystem::path& launcher,
                                             milliseconds timeout = milliseconds(5000));

  ~KernelClient();

  KernelClient(const KernelClient&) = delete;
  KernelClient& operator=(const KernelClient&) = delete;

  const wire::ConnectionInfo& connection() const;
  // Set for spawned kernels.
  std::optional<std::filesystem::path> connection_file() const;

  CollectedExecution exec_collect(const std::string& code,
                                  milliseconds timeout = kExecuteTimeout,
                                  bool silent = false);
  json kernel_info(milliseconds timeout = kInfoTimeout);
  json complete(const std::string& code, std::size_t cursor,
                milliseconds timeout = kInfoTimeout);
  json is_complete(const std::string& code, milliseconds timeout = kInfoTimeout);
  json history(milliseconds timeout = kInfoTimeout);
  // Sent on control. For spawned kernels also waits for process exit.
  json shutdown(bool restart = false, milliseconds timeout = kShutdownTimeout);

  // Sends a request and returns the matching reply message.
  wire::WireMessage request(wire::Channel channel, const std::string& msg_type,
                            json content, milliseconds timeout);

  // Round trip on the heartbeat channel. Returns the echoed payload.
  std::optional<std::string> ping(const std::string& payload,
                                  milliseconds timeout = milliseconds(1000));

  Transcript run_script(const std::filesystem::path& path,
                        milliseconds timeout = kExecuteTimeout);
  Transcript run_cells(const std::vector<std::string>& cells,
                       milliseconds timeout = kExecuteTimeout);

  // Spawned kernels only: true once the process has exited.
  bool kernel_exited(milliseconds wait = milliseconds(0));

 private:
  KernelClient();

  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace kernelforge::client
