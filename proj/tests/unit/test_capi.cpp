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

// Exercises libkernelforge through its C interface only.

#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kernelforge/kernelforge.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  kf_string_free(s);
  return out;
}

std::vector<int> free_ports(int n) {
  std::vector<int> fds, ports;
  for (int i = 0; i < n; ++i) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ::bind(fd, reinterpret_cast<sockaddr*>(&a), sizeof(a));
    socklen_t len = sizeof(a);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&a), &len);
    fds.push_back(fd);
    ports.push_back(ntohs(a.sin_port));
  }
  for (int fd : fds) ::close(fd);
  return ports;
}

fs::path connection_file() {
  auto p = free_ports(5);
  json info = {{"transport", "tcp"},     {"ip", "127.0.0.1"},    {"shell_port", p[0]},
               {"iopub_port", p[1]},     {"stdin_port", p[2]},   {"control_port", p[3]},
               {"hb_port", p[4]},        {"key", "capi-secret"},
               {"signature_scheme", "hmac-sha256"}};
  fs::path file = fs::temp_directory_path() /
                  ("kf-capi-" + std::to_string(::getpid()) + "-" + std::to_string(p[0]) + ".json");
  std::ofstream(file) << info.dump();
  return file;
}

}  // namespace

TEST_SUITE("capi") {

TEST_CASE("status names and errors") {
  CHECK(std::string(kf_version()).size() > 0);
  CHECK(std::string(kf_status_name(KF_TIMEOUT)) == "timeout");
  char* out = nullptr;
  CHECK(kf_dockerfile("no-such-language", &out) == KF_NOT_FOUND);
  CHECK(out == nullptr);
  CHECK(std::string(kf_last_error()).find("no-such-language") != std::string::npos);
  CHECK(kf_dockerfile(nullptr, &out) == KF_INVALID_ARGUMENT);
  CHECK(kf_dockerfile("calc", nullptr) == KF_INVALID_ARGUMENT);
  CHECK(kf_dockerfile("calc", &out) == KF_OK);
  CHECK(std::string(kf_last_error()).empty());
  CHECK(take(out).find("\nFROM ubuntu:") != std::string::npos);
  kf_string_free(nullptr);
}

TEST_CASE("registry calls") {
  char* out = nullptr;
  REQUIRE(kf_languages(&out) == KF_OK);
  CHECK(take(out) == "calc\n");

  REQUIRE(kf_kernel_spec("calc", "/usr/bin/kernelforge", &out) == KF_OK);
  json spec = json::parse(take(out));
  CHECK(spec["display_name"] == "Calc");
  CHECK(kf_kernel_spec("calc", "relative", &out) == KF_INVALID_ARGUMENT);

  char* name = nullptr;
  REQUIRE(kf_mode_script("calc", &out, &name) == KF_OK);
  CHECK(take(name) == "Calc.mode.js");
  CHECK(take(out).find("defineSimpleMode(\"Calc\"") != std::string::npos);

  int ok = -1;
  REQUIRE(kf_doctor(&out, &ok) == KF_OK);
  CHECK((ok == 0 || ok == 1));
  CHECK(take(out).find("jupyter on PATH") != std::string::npos);
}

TEST_CASE("install through the C API") {
  fs::path root = fs::temp_directory_path() / ("kf-capi-install-" + std::to_string(::getpid()));
  fs::create_directories(root / "bin");
  std::ofstream(root / "bin" / "jupyter") << "#!/bin/sh\nexit 0\n";
  fs::permissions(root / "bin" / "jupyter", fs::perms::owner_all);
  std::string old_path = std::getenv("PATH");
  ::setenv("PATH", (root / "bin").c_str(), 1);
  ::setenv("KERNELFORGE_KERNEL_DIR", (root / "kernels").c_str(), 1);

  char* dir = nullptr;
  kf_status rc = kf_kernel_install("calc", "/usr/bin/kernelforge", nullptr, &dir);
  ::setenv("PATH", old_path.c_str(), 1);
  ::unsetenv("KERNELFORGE_KERNEL_DIR");
  REQUIRE(rc == KF_OK);
  fs::path installed = take(dir);
  CHECK(installed == root / "kernels" / "calc");
  CHECK(fs::exists(installed / "kernel.json"));
  CHECK(fs::exists(installed / "Calc.mode.js"));
  fs::remove_all(root);
}

TEST_CASE("in-process kernel driven by a client") {
  fs::path file = connection_file();
  kf_kernel* kernel = nullptr;
  REQUIRE(kf_kernel_open(file.c_str(), "calc", &kernel) == KF_OK);
  CHECK(kf_kernel_wait(kernel, 10) == KF_TIMEOUT);

  kf_client* client = nullptr;
  REQUIRE(kf_client_connect(file.c_str(), 0, &client) == KF_OK);
  char* out = nullptr;
  REQUIRE(kf_client_execute(client, "x = 6 * 7", 0, &out) == KF_OK);
  json run = json::parse(take(out));
  CHECK(run["status"] == "ok");
  CHECK(run["execution_count"] == 1);
  CHECK(run["trace"][2]["content"]["data"]["text/plain"] == "42");

  int failed = -1;
  REQUIRE(kf_client_run_cell(client, "x + 1", &out, &failed) == KF_OK);
  CHECK(take(out) == "In[2]: x + 1\nOut[2]: 43\n");
  CHECK(failed == 0);
  REQUIRE(kf_client_run_cell(client, "1 -2", &out, &failed) == KF_OK);
  CHECK(take(out) == "In[3]: 1 -2\nErr[3]: Parse error at 1:3\n");
  CHECK(failed == 1);

  REQUIRE(kf_client_complete(client, "1 + x", 5, &out) == KF_OK);
  CHECK(json::parse(take(out))["matches"] == json::array({"x"}));
  REQUIRE(kf_client_is_complete(client, "x =", &out) == KF_OK);
  CHECK(json::parse(take(out))["status"] == "incomplete");
  REQUIRE(kf_client_kernel_info(client, &out) == KF_OK);
  CHECK(json::parse(take(out))["implementation"] == "kernelforge");
  CHECK(kf_client_ping(client, 500) == KF_OK);

  REQUIRE(kf_client_shutdown(client, 1, &out) == KF_OK);
  CHECK(json::parse(take(out))["restart"] == true);
  CHECK(kf_kernel_wait(kernel, 3000) == KF_OK);
  kf_client_close(client);
  kf_kernel_close(kernel);
  fs::remove(file);
}

TEST_CASE("spawned kernel through the C API") {
  kf_client* client = nullptr;
  REQUIRE(kf_client_spawn("calc", KF_CLI_PATH, 0, &client) == KF_OK);
  char* out = nullptr;
  int failed = -1;
  REQUIRE(kf_client_run_cell(client, "1 + 2", &out, &failed) == KF_OK);
  CHECK(take(out) == "In[1]: 1 + 2\nOut[1]: 3\n");
  CHECK(kf_client_shutdown(client, 0, nullptr) == KF_OK);
  kf_client_close(client);
}

TEST_CASE("bad connection files") {
  kf_kernel* kernel = nullptr;
  CHECK(kf_kernel_open("/nonexistent.json", "calc", &kernel) == KF_NOT_FOUND);
  CHECK(kernel == nullptr);
  kf_client* client = nullptr;
  CHECK(kf_client_connect("/nonexistent.json", 0, &client) == KF_NOT_FOUND);
  CHECK(kf_client_execute(nullptr, "1", 0, nullptr) == KF_INVALID_ARGUMENT);
  kf_kernel_close(nullptr);
  kf_client_close(nullptr);
}

}
