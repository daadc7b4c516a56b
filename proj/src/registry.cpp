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

#include "kernelforge/registry.hpp"

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "kernelforge/error.hpp"
#include "kernelforge/wire.hpp"

extern char** environ;

namespace kernelforge::registry {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Registry {
  std::mutex mu;
  std::map<std::string, LanguageEntry> entries;
};

Registry& registry() {
  static Registry instance;
  return instance;
}

std::string env_or_empty(const char* name) {
  const char* value = std::getenv(name);
  return value ? std::string(value) : std::string();
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (const auto& item : items) {
    if (!out.empty()) out += sep;
    out += item;
  }
  return out;
}

}  // namespace

void register_language(LanguageEntry entry) {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  std::string key = entry.entry;
  r.entries.insert_or_assign(std::move(key), std::move(entry));
}

const LanguageEntry* find_language(const std::string& entry) {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  auto it = r.entries.find(entry);
  return it == r.entries.end() ? nullptr : &it->second;
}

std::vector<std::string> registered_languages() {
  auto& r = registry();
  std::lock_guard lock(r.mu);
  std::vector<std::string> names;
  for (const auto& [name, entry] : r.entries) names.push_back(name);
  return names;
}

namespace {

const LanguageEntry& require_language(const std::string& entry) {
  register_builtin_languages();
  if (const auto* found = find_language(entry)) return *found;
  throw Error(ErrorCode::kNotFound,
              "unknown language '" + entry + "'; registered languages: " +
                  join(registered_languages(), ", "));
}

}  // namespace

KernelDescriptor descriptor_for(const std::string& entry) {
  const LanguageEntry& lang = require_language(entry);
  KernelDescriptor d;
  d.language_name = lang.language_name;
  d.entry = lang.entry;
  if (!lang.display_name.empty()) d.display_name = lang.display_name;
  return d;
}

std::string slug(std::string_view language_name) {
  std::string out;
  for (unsigned char c : language_name) {
    if (c >= 'A' && c <= 'Z') {
      out.push_back(static_cast<char>(c - 'A' + 'a'));
    } else if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-') {
      out.push_back(static_cast<char>(c));
    } else if (!out.empty() && out.back() != '-') {
      out.push_back('-');
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out;
}

std::string generate_kernel_spec(const KernelDescriptor& descriptor,
                                 const fs::path& launcher) {
  if (!launcher.is_absolute()) {
    throw Error(ErrorCode::kInvalidArgument,
                "launcher path must be absolute: " + launcher.string());
  }
  json spec = {
      {"argv",
       {launcher.string(), "serve", "--connection-file", "{connection_file}",
        "--language", descriptor.entry}},
      {"display_name", descriptor.display()},
      {"language", descriptor.language_name},
  };
  return spec.dump(2) + "\n";
}

std::unique_ptr<protocol::LanguageProtocol> make_interpreter(
    const KernelDescriptor& descriptor) {
  const LanguageEntry& lang = require_language(descriptor.entry);
  return std::make_unique<protocol::ReplAdapter>(lang.factory,
                                                 lang.language_name + "> ");
}

std::unique_ptr<protocol::KernelServer> make_kernel_server(
    const KernelDescriptor& descriptor) {
  const LanguageEntry& lang = require_language(descriptor.entry);
  return std::make_unique<protocol::KernelServer>(make_interpreter(descriptor), lang.info);
}

fs::path user_kernels_dir() {
  if (auto dir = env_or_empty("KERNELFORGE_KERNEL_DIR"); !dir.empty()) return dir;
  if (auto dir = env_or_empty("JUPYTER_DATA_DIR"); !dir.empty()) {
    return fs::path(dir) / "kernels";
  }
  const std::string home = env_or_empty("HOME");
#ifdef __APPLE__
  return fs::path(home) / "Library" / "Jupyter" / "kernels";
#else
  if (auto xdg = env_or_empty("XDG_DATA_HOME"); !xdg.empty()) {
    return fs::path(xdg) / "jupyter" / "kernels";
  }
  return fs::path(home) / ".local" / "share" / "jupyter" / "kernels";
#endif
}

std::optional<fs::path> find_executable(const std::string& name) {
  std::string path = env_or_empty("PATH");
  std::size_t start = 0;
  while (start <= path.size()) {
    std::size_t end = path.find(':', start);
    if (end == std::string::npos) end = path.size();
    fs::path dir = end > start ? fs::path(path.substr(start, end - start)) : fs::path(".");
    fs::path candidate = dir / name;
    std::error_code ec;
    if (fs::is_regular_file(candidate, ec) && ::access(candidate.c_str(), X_OK) == 0) {
      return candidate;
    }
    start = end + 1;
  }
  return std::nullopt;
}

bool EnvironmentReport::ok() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const EnvironmentCheck& c) { return c.ok; });
}

std::string EnvironmentReport::to_string() const {
  std::ostringstream out;
  for (const auto& c : checks) {
    out << (c.ok ? "[ok]   " : "[FAIL] ") << c.name << ": " << c.detail << "\n";
  }
  return out.str();
}

EnvironmentReport verify_environment() {
  EnvironmentReport report;

  EnvironmentCheck jupyter{"jupyter on PATH", false, ""};
  if (auto found = find_executable("jupyter")) {
    jupyter.ok = true;
    jupyter.detail = found->string();
  } else {
    jupyter.detail = "no 'jupyter' executable found on PATH";
  }
  report.checks.push_back(std::move(jupyter));

  EnvironmentCheck writable{"kernels directory writable", false, ""};
  const fs::path dir = user_kernels_dir();
  writable.detail = dir.string();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!ec) {
    const fs::path probe = dir / (".kernelforge-probe-" + wire::new_uuid());
    std::ofstream(probe) << "probe";
    writable.ok = fs::exists(probe, ec);
    fs::remove(probe, ec);
  }
  if (!writable.ok) writable.detail += " (cannot create or write)";
  report.checks.push_back(std::move(writable));
  return report;
}

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

}  // namespace

fs::path install_kernel(const KernelDescriptor& descriptor,
                        const std::string& spec_text, const std::string& mode_file,
                        const std::string& mode_script) {
  EnvironmentReport report = verify_environment();
  if (!report.ok()) {
    throw Error(ErrorCode::kEnvironment,
                "environment check failed:\n" + report.to_string());
  }
  const std::string name = slug(descriptor.language_name);
  if (name.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "language name has no usable characters: " + descriptor.language_name);
  }
  const fs::path dir = user_kernels_dir() / name;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());

  write_file(dir / "kernel.json", spec_text);
  if (descriptor.logo_path) {
    if (!fs::is_regular_file(*descriptor.logo_path)) {
      throw Error(ErrorCode::kNotFound, "logo not found: " + descriptor.logo_path->string());
    }
    fs::copy_file(*descriptor.logo_path, dir / "logo-64x64.png",
                  fs::copy_options::overwrite_existing, ec);
    if (ec) throw Error(ErrorCode::kIo, "cannot copy logo: " + ec.message());
  }
  if (!mode_file.empty()) write_file(dir / mode_file, mode_script);
  return dir;
}

std::string emit_dockerfile(const KernelDescriptor& descriptor) {
  std::ostringstream out;
  out << "# Notebook image for the " << descriptor.display()
      << " kernel. Generated by kernelforge.\n"
      << "# Build context: the kernelforge executable and libkernelforge.so.\n"
      << "FROM ubuntu:22.04\n"
      << "RUN apt-get update \\\n"
      << " && apt-get install -y --no-install-recommends python3 python3-pip libspdlog1 \\\n"
      << " && rm -rf /var/lib/apt/lists/*\n"
      << "RUN pip3 install --no-cache-dir notebook\n"
      << "COPY kernelforge /usr/local/bin/kernelforge\n"
      << "COPY libkernelforge.so /usr/local/lib/libkernelforge.so\n"
      << "ENV KERNELFORGE_KERNEL_DIR=/usr/local/share/jupyter/kernels\n"
      << "RUN ldconfig && kernelforge install --language " << descriptor.entry << "\n"
      << "EXPOSE 8888\n"
      << "CMD [\"jupyter\", \"notebook\", \"--ip=0.0.0.0\", \"--port=8888\", "
         "\"--no-browser\", \"--allow-root\"]\n";
  return out.str();
}

struct NotebookHandle::Impl {
  std::vector<std::string> argv;
  pid_t pid = -1;
  int out_fd = -1;
  std::thread reader;
  mutable std::mutex mu;
  LogSink sink;
  std::vector<std::string> backlog;

  void relay(std::string line) {
    std::lock_guard lock(mu);
    if (sink) {
      sink(line);
    } else {
      backlog.push_back(std::move(line));
    }
  }

  void read_loop(int fd) {
    std::string pending;
    char buf[4096];
    for (;;) {
      ssize_t n = ::read(fd, buf, sizeof(buf));
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      pending.append(buf, static_cast<std::size_t>(n));
      std::size_t nl;
      while ((nl = pending.find('\n')) != std::string::npos) {
        relay(pending.substr(0, nl));
        pending.erase(0, nl + 1);
      }
    }
    if (!pending.empty()) relay(pending);
    ::close(fd);
  }
};

NotebookHandle::NotebookHandle(std::vector<std::string> argv)
    : impl_(std::make_unique<Impl>()) {
  impl_->argv = std::move(argv);
}

NotebookHandle::~NotebookHandle() { stop(); }

void NotebookHandle::serve() {
  if (impl_->pid > 0) return;
  if (impl_->argv.empty() || !find_executable(impl_->argv.front())) {
    throw Error(ErrorCode::kEnvironment,
                "'" + (impl_->argv.empty() ? std::string() : impl_->argv.front()) +
                    "' not found on PATH; run `kernelforge doctor` (verify_environment)");
  }
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) {
    throw Error(ErrorCode::kIo, std::string("pipe: ") + std::strerror(errno));
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);
  posix_spawn_file_actions_adddup2(&actions, fds[1], STDERR_FILENO);
  std::vector<char*> args;
  for (auto& a : impl_->argv) args.push_back(a.data());
  args.push_back(nullptr);
  pid_t pid = -1;
  int rc = ::posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(fds[1]);
  if (rc != 0) {
    ::close(fds[0]);
    throw Error(ErrorCode::kEnvironment, std::string("cannot start notebook server: ") +
                                             std::strerror(rc));
  }
  impl_->pid = pid;
  impl_->reader = std::thread([impl = impl_.get(), fd = fds[0]] { impl->read_loop(fd); });
  spdlog::info("notebook server started (pid {})", pid);
}

void NotebookHandle::stop() {
  if (impl_->pid <= 0) return;
  ::kill(impl_->pid, SIGTERM);
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
  int status = 0;
  pid_t done = 0;
  while ((done = ::waitpid(impl_->pid, &status, WNOHANG)) == 0 &&
         std::chrono::steady_clock::now() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  if (done == 0) {
    ::kill(impl_->pid, SIGKILL);
    ::waitpid(impl_->pid, &status, 0);
  }
  impl_->pid = -1;
  if (impl_->reader.joinable()) impl_->reader.join();
}

void NotebookHandle::logs(LogSink sink) {
  std::lock_guard lock(impl_->mu);
  for (const auto& line : impl_->backlog) sink(line);
  impl_->backlog.clear();
  impl_->sink = std::move(sink);
}

bool NotebookHandle::running() const {
  if (impl_->pid <= 0) return false;
  return ::waitpid(impl_->pid, nullptr, WNOHANG) == 0;
}

const std::vector<std::string>& NotebookHandle::argv() const { return impl_->argv; }

std::unique_ptr<NotebookHandle> serve_notebook(const KernelDescriptor& descriptor) {
  spdlog::debug("notebook for {}", descriptor.display());
  return std::make_unique<NotebookHandle>(
      std::vector<std::string>{"jupyter", "notebook", "--no-browser"});
}

}  // namespace kernelforge::registry
