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

// kernelforge command line. Talks to the library only through the C API.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "kernelforge/kernelforge.h"

namespace fs = std::filesystem;

namespace {

volatile std::sig_atomic_t g_terminate = 0;

void on_terminate(int) { g_terminate = 1; }

int fail(kf_status status) {
  std::cerr << "kernelforge: " << kf_status_name(status) << ": " << kf_last_error()
            << "\n";
  return 1;
}

// Takes ownership of a library string.
std::string take(char* s) {
  std::string out = s != nullptr ? s : "";
  kf_string_free(s);
  return out;
}

std::string self_path() {
  std::error_code ec;
  auto exe = fs::read_symlink("/proc/self/exe", ec);
  return ec ? fs::absolute("kernelforge").string() : exe.string();
}

int cmd_install(const std::string& language, const std::string& logo) {
  char* dir = nullptr;
  kf_status rc = kf_kernel_install(language.c_str(), self_path().c_str(),
                                   logo.empty() ? nullptr : logo.c_str(), &dir);
  if (rc != KF_OK) return fail(rc);
  std::cout << "Installed kernel " << language << " in " << take(dir) << "\n";
  return 0;
}

int cmd_serve(const std::string& connection_file, const std::string& language) {
  // Jupyter delivers interrupts as SIGINT; execution is not preemptible, so
  // the signal is ignored rather than killing the kernel.
  std::signal(SIGINT, SIG_IGN);
  std::signal(SIGTERM, on_terminate);
  kf_kernel* kernel = nullptr;
  kf_status rc = kf_kernel_open(connection_file.c_str(), language.c_str(), &kernel);
  if (rc != KF_OK) return fail(rc);
  while (!g_terminate) {
    rc = kf_kernel_wait(kernel, 200);
    if (rc != KF_TIMEOUT) break;
  }
  kf_kernel_stop(kernel);
  kf_kernel_close(kernel);
  return rc == KF_OK || rc == KF_TIMEOUT ? 0 : fail(rc);
}

int cmd_dockerfile(const std::string& language) {
  char* text = nullptr;
  kf_status rc = kf_dockerfile(language.c_str(), &text);
  if (rc != KF_OK) return fail(rc);
  std::cout << take(text);
  return 0;
}

int cmd_doctor() {
  char* report = nullptr;
  int ok = 0;
  kf_status rc = kf_doctor(&report, &ok);
  if (rc != KF_OK) return fail(rc);
  std::cout << take(report);
  return ok ? 0 : 1;
}

int cmd_mode(const std::string& language, const std::string& out) {
  char* script = nullptr;
  kf_status rc = kf_mode_script(language.c_str(), &script, nullptr);
  if (rc != KF_OK) return fail(rc);
  std::string text = take(script);
  if (out.empty()) {
    std::cout << text;
    return 0;
  }
  std::ofstream file(out, std::ios::binary);
  file << text;
  if (!file) {
    std::cerr << "kernelforge: cannot write " << out << "\n";
    return 1;
  }
  return 0;
}

int cmd_notebook(const std::string& language) {
  kf_status rc = kf_notebook_run(language.c_str());
  return rc == KF_OK ? 0 : fail(rc);
}

int print_transcript(kf_status rc, char* transcript, int failed) {
  if (rc != KF_OK) return fail(rc);
  std::cout << take(transcript) << std::flush;
  return failed ? 1 : 0;
}

int cmd_client_exec(const std::string& connection_file, const std::string& code) {
  kf_client* client = nullptr;
  kf_status rc = kf_client_connect(connection_file.c_str(), 0, &client);
  if (rc != KF_OK) return fail(rc);
  char* transcript = nullptr;
  int failed = 0;
  rc = kf_client_run_cell(client, code.c_str(), &transcript, &failed);
  kf_client_close(client);
  return print_transcript(rc, transcript, failed);
}

int cmd_client_script(const std::string& connection_file, const std::string& path) {
  kf_client* client = nullptr;
  kf_status rc = kf_client_connect(connection_file.c_str(), 0, &client);
  if (rc != KF_OK) return fail(rc);
  char* transcript = nullptr;
  int failed = 0;
  rc = kf_client_run_script(client, path.c_str(), &transcript, &failed);
  kf_client_close(client);
  return print_transcript(rc, transcript, failed);
}

// Spawns a kernel and feeds it one cell per stdin line.
int cmd_client_spawn(const std::string& language) {
  kf_client* client = nullptr;
  kf_status rc = kf_client_spawn(language.c_str(), self_path().c_str(), 0, &client);
  if (rc != KF_OK) return fail(rc);
  int status = 0;
  std::string line;
  while (std::getline(std::cin, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    char* transcript = nullptr;
    int failed = 0;
    rc = kf_client_run_cell(client, line.c_str(), &transcript, &failed);
    if (print_transcript(rc, transcript, failed) != 0) status = 1;
    if (rc != KF_OK) break;
  }
  rc = kf_client_shutdown(client, 0, nullptr);
  if (rc != KF_OK) status = fail(rc);
  kf_client_close(client);
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Jupyter kernels for small languages"};
  app.set_version_flag("--version", kf_version());
  app.require_subcommand(1);
  bool verbose = false;

  std::string language;
  std::string logo;
  std::string connection_file;
  std::string out;
  std::string code;
  std::string script;

  auto* install = app.add_subcommand("install", "Install the kernel spec for a language");
  install->add_option("--language", language, "Language entry")->required();
  install->add_option("--logo", logo, "64x64 PNG logo")->check(CLI::ExistingFile);

  auto* serve = app.add_subcommand("serve", "Run a kernel (started by Jupyter)");
  serve->add_option("--connection-file", connection_file, "Connection file")->required();
  serve->add_option("--language", language, "Language entry")->required();
  serve->add_flag("--verbose", verbose, "Debug logging");

  auto* dockerfile = app.add_subcommand("dockerfile", "Print a Dockerfile for a language");
  dockerfile->add_option("--language", language, "Language entry")->required();

  auto* doctor = app.add_subcommand("doctor", "Check the local Jupyter setup");

  auto* mode = app.add_subcommand("mode", "Emit the CodeMirror mode for a language");
  mode->add_option("--language", language, "Language entry")->required();
  mode->add_option("--out", out, "Output file (default: stdout)");

  auto* notebook = app.add_subcommand("notebook", "Run jupyter notebook");
  notebook->add_option("--language", language, "Language entry")->required();

  auto* client = app.add_subcommand("client", "Headless protocol client");
  client->require_subcommand(1);
  auto* exec = client->add_subcommand("exec", "Execute one cell");
  exec->add_option("--connection-file", connection_file, "Connection file")->required();
  exec->add_option("--code", code, "Cell source")->required();
  auto* run = client->add_subcommand("script", "Execute a file, one cell per line");
  run->add_option("--connection-file", connection_file, "Connection file")->required();
  run->add_option("file", script, "Script")->required();
  auto* spawn = client->add_subcommand("spawn", "Spawn a kernel and feed it stdin lines");
  spawn->add_option("--language", language, "Language entry")->required();

  CLI11_PARSE(app, argc, argv);
  kf_set_log_level(verbose ? 2 : 1);

  if (*install) return cmd_install(language, logo);
  if (*serve) return cmd_serve(connection_file, language);
  if (*dockerfile) return cmd_dockerfile(language);
  if (*doctor) return cmd_doctor();
  if (*mode) return cmd_mode(language, out);
  if (*notebook) return cmd_notebook(language);
  if (*exec) return cmd_client_exec(connection_file, code);
  if (*run) return cmd_client_script(connection_file, script);
  if (*spawn) return cmd_client_spawn(language);
  return 1;
}
