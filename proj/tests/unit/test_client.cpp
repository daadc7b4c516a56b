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

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <future>
#include <thread>

#include "kernelforge/client.hpp"
#include "kernelforge/error.hpp"

using namespace kernelforge;
using namespace kernelforge::client;
namespace fs = std::filesystem;
using std::chrono::milliseconds;

namespace {

std::unique_ptr<KernelClient> spawn_calc() { return KernelClient::spawn("calc", KF_CLI_PATH); }

}  // namespace

TEST_SUITE("client") {

TEST_CASE("transcript format") {
  Transcript t;
  t.entries = {{1, "1 + 2", "3", false}, {2, "x = ", "Parse error at 1:5", true},
               {3, "show x", "<div>\n<p>x: 2</p>\n</div>", false}, {4, "y = 1", "", false}};
  CHECK(t.failed());
  CHECK(t.to_string() ==
        "In[1]: 1 + 2\n"
        "Out[1]: 3\n"
        "In[2]: x = \n"
        "Err[2]: Parse error at 1:5\n"
        "In[3]: show x\n"
        "Out[3]: <div>\n"
        "        <p>x: 2</p>\n"
        "        </div>\n"
        "In[4]: y = 1\n");
}

TEST_CASE("spawned kernel session") {
  auto kernel = spawn_calc();
  REQUIRE(kernel->connection_file());
  CHECK(fs::exists(*kernel->connection_file()));

  auto run = kernel->exec_collect("1 + 2");
  CHECK(run.status == "ok");
  CHECK(run.execution_count == 1);
  REQUIRE(run.trace.size() == 4);
  CHECK(run.trace.front().msg_type == "status");
  CHECK(run.trace.front().content["execution_state"] == "busy");
  CHECK(run.trace.back().content["execution_state"] == "idle");
  REQUIRE(run.result_bundle());
  CHECK(*run.result_bundle() == json{{"text/plain", "3"}});
  CHECK_FALSE(run.error());

  auto bad = kernel->exec_collect("1 + $");
  CHECK(bad.status == "error");
  REQUIRE(bad.error());
  CHECK(bad.error()->content["evalue"] == "Parse error");
  CHECK(bad.execution_count == 2);

  auto info = kernel->kernel_info();
  CHECK(info["language_info"]["name"] == "Calc");
  CHECK(info["protocol_version"] == "5.3");

  CHECK(kernel->exec_collect("xy = 7").status == "ok");
  auto comp = kernel->complete("x", 1);
  CHECK(comp["matches"] == json::array({"xy"}));
  CHECK(comp["cursor_start"] == 0);
  CHECK(kernel->is_complete("x =")["status"] == "incomplete");
  CHECK(kernel->history()["history"].size() == 3);

  auto silent = kernel->exec_collect("5", kExecuteTimeout, true);
  CHECK(silent.trace.size() == 2);
  CHECK(kernel->exec_collect("5").execution_count == 4);

  const std::string payload("abc\0def", 7);
  CHECK(kernel->ping(payload) == std::optional<std::string>(payload));

  auto bye = kernel->shutdown();
  CHECK(bye["status"] == "ok");
  CHECK(bye["restart"] == false);
  CHECK(kernel->kernel_exited());
}

TEST_CASE("scripts produce a transcript") {
  auto kernel = spawn_calc();
  fs::path script = fs::temp_directory_path() / ("kf-script-" + wire::new_uuid() + ".calc");
  std::ofstream(script) << "x = 2\n\ny = 1 + x\r\nshow 2 * y\nq\n";
  Transcript t = kernel->run_script(script);
  fs::remove(script);
  REQUIRE(t.entries.size() == 4);
  CHECK(t.entries[0].output == "2");
  CHECK(t.entries[1].input == "y = 1 + x");
  CHECK(t.entries[1].output == "3");
  CHECK(t.entries[2].output.find("2 * y: 6") != std::string::npos);
  CHECK(t.entries[3].error);
  CHECK(t.entries[3].output == "Undefined variable q");
  CHECK(t.failed());
  CHECK(t.to_string().rfind("In[1]: x = 2\nOut[1]: 2\nIn[2]: y = 1 + x\nOut[2]: 3\n", 0) == 0);

  CHECK_THROWS_AS(kernel->run_script("/nonexistent/file.calc"), Error);
}

TEST_CASE("two clients on one kernel never see each other's output") {
  auto first = spawn_calc();
  auto second = KernelClient::connect(first->connection());
  for (int i = 0; i < 10; ++i) {
    auto a = std::async(std::launch::async, [&] { return first->exec_collect("1 + 1"); });
    auto b = second->exec_collect("2 * 5");
    auto ra = a.get();
    CHECK(ra.result_bundle()->at("text/plain") == "2");
    CHECK(b.result_bundle()->at("text/plain") == "10");
    for (const auto& e : ra.trace) {
      if (e.msg_type == "execute_input") CHECK(e.content["code"] == "1 + 1");
    }
    for (const auto& e : b.trace) {
      if (e.msg_type == "execute_input") CHECK(e.content["code"] == "2 * 5");
    }
  }
}

TEST_CASE("connect to nothing times out") {
  wire::ConnectionInfo info;
  zmtp::Socket probe(zmtp::SocketType::kRouter);
  info.shell_port = probe.bind("127.0.0.1", 0);
  probe.close();
  info.iopub_port = info.shell_port + 1;
  info.stdin_port = info.shell_port + 2;
  info.control_port = info.shell_port + 3;
  info.hb_port = info.shell_port + 4;
  info.key = "k";
  auto start = std::chrono::steady_clock::now();
  try {
    KernelClient::connect(info, milliseconds(300));
    FAIL("connected to nothing");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTimeout);
    CHECK(std::string(e.what()).find("kernel unreachable") != std::string::npos);
  }
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(3));
}

TEST_CASE("spawning a missing launcher fails cleanly") {
  CHECK_THROWS_AS(KernelClient::spawn("calc", "/nonexistent/kernelforge"), Error);
}

}
