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

#include <sys/stat.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>

#include "kernelforge/error.hpp"
#include "kernelforge/registry.hpp"

using namespace kernelforge;
using namespace kernelforge::registry;
namespace fs = std::filesystem;
using wire::json;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Temporary PATH and kernels directory with a scripted `jupyter`.
struct Sandbox {
  fs::path root;
  std::string old_path;
  std::string old_dir;
  bool had_dir = false;

  explicit Sandbox(const std::string& jupyter_script = "#!/bin/sh\nexit 0\n") {
    root = fs::temp_directory_path() /
           ("kf-registry-" + std::to_string(::getpid()) + "-" + wire::new_uuid());
    fs::create_directories(root / "bin");
    if (!jupyter_script.empty()) {
      std::ofstream(root / "bin" / "jupyter") << jupyter_script;
      fs::permissions(root / "bin" / "jupyter", fs::perms::owner_all);
    }
    old_path = std::getenv("PATH") ? std::getenv("PATH") : "";
    if (const char* d = std::getenv("KERNELFORGE_KERNEL_DIR")) {
      had_dir = true;
      old_dir = d;
    }
    ::setenv("PATH", (root / "bin").c_str(), 1);
    ::setenv("KERNELFORGE_KERNEL_DIR", (root / "kernels").c_str(), 1);
  }

  ~Sandbox() {
    ::setenv("PATH", old_path.c_str(), 1);
    if (had_dir) {
      ::setenv("KERNELFORGE_KERNEL_DIR", old_dir.c_str(), 1);
    } else {
      ::unsetenv("KERNELFORGE_KERNEL_DIR");
    }
    std::error_code ec;
    fs::permissions(root, fs::perms::owner_all, ec);
    fs::remove_all(root, ec);
  }
};

KernelDescriptor calc_descriptor() {
  register_builtin_languages();
  return descriptor_for("calc");
}

}  // namespace

TEST_SUITE("registry") {

TEST_CASE("builtin languages") {
  register_builtin_languages();
  register_builtin_languages();
  auto names = registered_languages();
  CHECK(std::count(names.begin(), names.end(), "calc") == 1);
  const LanguageEntry* calc = find_language("calc");
  REQUIRE(calc);
  CHECK(calc->language_name == "Calc");
  CHECK(calc->info.codemirror_mode == "Calc");
  CHECK(find_language("nope") == nullptr);
  try {
    descriptor_for("nope");
    FAIL("unknown language accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNotFound);
    CHECK(std::string(e.what()).find("calc") != std::string::npos);
  }
}

TEST_CASE("kernel.json shape") {
  const std::string text = generate_kernel_spec(calc_descriptor(), "/opt/kf/bin/kernelforge");
  json spec = json::parse(text);
  std::set<std::string> keys;
  for (const auto& [k, v] : spec.items()) keys.insert(k);
  CHECK(keys == std::set<std::string>{"argv", "display_name", "language"});
  CHECK(spec["display_name"] == "Calc");
  CHECK(spec["language"] == "Calc");
  CHECK(spec["argv"] == json::array({"/opt/kf/bin/kernelforge", "serve", "--connection-file",
                                     "{connection_file}", "--language", "calc"}));
  CHECK(text == generate_kernel_spec(calc_descriptor(), "/opt/kf/bin/kernelforge"));
  CHECK(json::parse(json::parse(text).dump()) == spec);

  KernelDescriptor named = calc_descriptor();
  named.display_name = "Calculator";
  CHECK(json::parse(generate_kernel_spec(named, "/x"))["display_name"] == "Calculator");
  KernelDescriptor plain{"Plain Lang", "calc", std::nullopt, std::nullopt};
  CHECK(json::parse(generate_kernel_spec(plain, "/x"))["display_name"] == "Plain Lang");

  CHECK_THROWS_AS(generate_kernel_spec(calc_descriptor(), "relative/kernelforge"), Error);
}

TEST_CASE("slugs") {
  CHECK(slug("Calc") == "calc");
  CHECK(slug("My Lang/2.0") == "my-lang-2-0");
  CHECK(slug("a_b-C") == "a_b-c");
  CHECK(slug("../..") == "");
  std::regex allowed("[a-z0-9_-]*");
  for (const char* name : {"Ünïcode λ", "x y z", "..", "A\\B", "tab\tname"}) {
    CHECK(std::regex_match(slug(name), allowed));
  }
}

TEST_CASE("interpreter and kernel server for an entry") {
  auto interp = make_interpreter(calc_descriptor());
  interp->initialize({}, {});
  CHECK(interp->prompt() == "Calc> ");
  protocol::MimeBundle out;
  protocol::Metadata meta;
  CHECK(interp->handle_input("2 * 21", out, meta).empty());
  CHECK(out.at("text/plain") == "42");
  CHECK(make_kernel_server(calc_descriptor()) != nullptr);
}

TEST_CASE("kernels directory resolution") {
  Sandbox box;
  CHECK(user_kernels_dir() == box.root / "kernels");
  ::unsetenv("KERNELFORGE_KERNEL_DIR");
  ::setenv("JUPYTER_DATA_DIR", "/tmp/jdata", 1);
  CHECK(user_kernels_dir() == fs::path("/tmp/jdata/kernels"));
  ::unsetenv("JUPYTER_DATA_DIR");
  CHECK(user_kernels_dir().filename() == "kernels");
}

TEST_CASE("environment checks") {
  {
    Sandbox box;
    auto report = verify_environment();
    CHECK(report.ok());
    REQUIRE(report.checks.size() == 2);
    CHECK(report.to_string().find("[ok]   jupyter on PATH") != std::string::npos);
    CHECK(find_executable("jupyter") == box.root / "bin" / "jupyter");
  }
  {
    Sandbox box("");
    auto report = verify_environment();
    CHECK_FALSE(report.ok());
    CHECK(report.to_string().find("[FAIL] jupyter on PATH") != std::string::npos);
  }
}

TEST_CASE("install writes the spec, logo and mode") {
  Sandbox box;
  auto d = calc_descriptor();
  std::ofstream(box.root / "logo.png") << "PNGDATA";
  d.logo_path = box.root / "logo.png";
  const std::string spec = generate_kernel_spec(d, "/usr/bin/kernelforge");
  fs::path dir = install_kernel(d, spec, "Calc.mode.js", "// mode");
  CHECK(dir == box.root / "kernels" / "calc");
  CHECK(read_file(dir / "kernel.json") == spec);
  CHECK(read_file(dir / "logo-64x64.png") == "PNGDATA");
  CHECK(read_file(dir / "Calc.mode.js") == "// mode");

  // Idempotent overwrite.
  CHECK(install_kernel(d, spec) == dir);
  CHECK(read_file(dir / "kernel.json") == spec);

  d.logo_path = box.root / "missing.png";
  CHECK_THROWS_AS(install_kernel(d, spec), Error);
}

TEST_CASE("install refuses when the environment check fails") {
  Sandbox box("");
  try {
    install_kernel(calc_descriptor(), "{}");
    FAIL("install succeeded without jupyter");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEnvironment);
  }
  CHECK_FALSE(fs::exists(box.root / "kernels" / "calc" / "kernel.json"));
}

TEST_CASE("install refuses an unwritable kernels directory") {
  if (::geteuid() == 0) return;  // root ignores permission bits
  Sandbox box;
  fs::create_directories(box.root / "kernels");
  fs::permissions(box.root / "kernels", fs::perms::owner_read | fs::perms::owner_exec);
  CHECK_THROWS_AS(install_kernel(calc_descriptor(), "{}"), Error);
}

TEST_CASE("dockerfile golden") {
  const std::string text = emit_dockerfile(calc_descriptor());
  CHECK(text == read_file(fs::path(KF_GOLDEN_DIR) / "calc.Dockerfile"));
  CHECK(text == emit_dockerfile(calc_descriptor()));
}

TEST_CASE("notebook handle lifecycle") {
  Sandbox box("#!/bin/sh\necho \"started $@\"\necho oops >&2\nexec /bin/sleep 30\n");
  auto handle = serve_notebook(calc_descriptor());
  CHECK(handle->argv() == std::vector<std::string>{"jupyter", "notebook", "--no-browser"});
  CHECK_FALSE(handle->running());
  handle->stop();  // no-op before serve

  handle->serve();
  CHECK(handle->running());
  std::mutex mu;
  std::vector<std::string> lines;
  handle->logs([&](const std::string& line) {
    std::lock_guard lock(mu);
    lines.push_back(line);
  });
  for (int i = 0; i < 200; ++i) {
    {
      std::lock_guard lock(mu);
      if (lines.size() >= 2) break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  {
    std::lock_guard lock(mu);
    CHECK(std::count(lines.begin(), lines.end(), "started notebook --no-browser") == 1);
    CHECK(std::count(lines.begin(), lines.end(), "oops") == 1);
  }
  auto start = std::chrono::steady_clock::now();
  handle->stop();
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(5));
  CHECK_FALSE(handle->running());
}

TEST_CASE("notebook without jupyter points at doctor") {
  Sandbox box("");
  auto handle = serve_notebook(calc_descriptor());
  try {
    handle->serve();
    FAIL("served without jupyter");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEnvironment);
    CHECK(std::string(e.what()).find("kernelforge doctor") != std::string::npos);
  }
}

}
