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

// Language registry and kernel generation: kernel.json, installation into the
// user's Jupyter data directory, container build files and the notebook
// server lifecycle.

#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kernelforge/highlight.hpp"
#include "kernelforge/protocol.hpp"

namespace kernelforge::registry {

// A DSL compiled into this binary, selectable by `entry`.
struct LanguageEntry {
  std::string entry;          // e.g. "calc"
  std::string language_name;  // e.g. "Calc"
  std::string display_name;   // empty: same as language_name
  protocol::ReplFactory factory;
  protocol::LanguageInfo info;
  highlight::Mode mode;
};

// Registers an entry, replacing any previous one with the same name.
void register_language(LanguageEntry entry);
const LanguageEntry* find_language(const std::string& entry);
std::vector<std::string> registered_languages();

// Adds the languages shipped with the library. Idempotent.
void register_builtin_languages();

struct KernelDescriptor {
  std::string language_name;
  std::string entry;
  std::optional<std::filesystem::path> logo_path;
  std::optional<std::string> display_name;

  const std::string& display() const {
    return display_name ? *display_name : language_name;
  }
};

// Descriptor for a registered entry. Throws Error(kNotFound) listing the
// registered names.
KernelDescriptor descriptor_for(const std::string& entry);

// Lowercased, restricted to [a-z0-9_-].
std::string slug(std::string_view language_name);

// kernel.json with exactly {argv, display_name, language}.
// `launcher` must be absolute.
std::string generate_kernel_spec(const KernelDescriptor& descriptor,
                                 const std::filesystem::path& launcher);

// Fresh LanguageProtocol for the descriptor's entry.
std::unique_ptr<protocol::LanguageProtocol> make_interpreter(
    const KernelDescriptor& descriptor);

// Interpreter plus the entry's language_info, ready for run_channels().
std::unique_ptr<protocol::KernelServer> make_kernel_server(
    const KernelDescriptor& descriptor);

// KERNELFORGE_KERNEL_DIR, then $JUPYTER_DATA_DIR/kernels, then the platform
// default user data directory.
std::filesystem::path user_kernels_dir();

// Searches PATH.
std::optional<std::filesystem::path> find_executable(const std::string& name);

struct EnvironmentCheck {
  std::string name;
  bool ok = false;
  std::string detail;
};

struct EnvironmentReport {
  std::vector<EnvironmentCheck> checks;

  bool ok() const;
  std::string to_string() const;
};

EnvironmentReport verify_environment();

// Writes kernel.json, the logo (as logo-64x64.png) and `mode_script` (when
// given, under `mode_file`) into <user kernels dir>/<slug>. Overwrites.
std::filesystem::path install_kernel(const KernelDescriptor& descriptor,
                                     const std::string& spec_text,
                                     const std::string& mode_file = {},
                                     const std::string& mode_script = {});

std::string emit_dockerfile(const KernelDescriptor& descriptor);

using LogSink = std::function<void(const std::string& line)>;

// Runs `jupyter notebook` as a child process.
class NotebookHandle {
 public:
  explicit NotebookHandle(std::vector<std::string> argv);
  ~NotebookHandle();

  NotebookHandle(const NotebookHandle&) = delete;
  NotebookHandle& operator=(const NotebookHandle&) = delete;

  // Spawns the server. Throws Error(kEnvironment) when jupyter is missing.
  void serve();
  // SIGTERM, then SIGKILL after 5 s. No-op when not serving.
  void stop();
  // Relays merged stdout/stderr lines to `sink` on a background thread.
  void logs(LogSink sink);

  bool running() const;
  const std::vector<std::string>& argv() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::unique_ptr<NotebookHandle> serve_notebook(const KernelDescriptor& descriptor);

}  // namespace kernelforge::registry
