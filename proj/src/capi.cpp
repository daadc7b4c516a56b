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

#include "kernelforge/kernelforge.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <thread>

#include <spdlog/spdlog.h>

#include "kernelforge/client.hpp"
#include "kernelforge/error.hpp"
#include "kernelforge/highlight.hpp"
#include "kernelforge/protocol.hpp"
#include "kernelforge/registry.hpp"
#include "kernelforge/version.hpp"
#include "kernelforge/wire.hpp"

namespace fs = std::filesystem;
using kernelforge::Error;
using kernelforge::ErrorCode;
using std::chrono::milliseconds;

struct kf_kernel {
  std::unique_ptr<kernelforge::protocol::KernelServer> server;
  std::unique_ptr<kernelforge::wire::KernelService> service;
};

struct kf_client {
  std::unique_ptr<kernelforge::client::KernelClient> client;
};

namespace {

thread_local std::string last_error;

kf_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return KF_INVALID_ARGUMENT;
    case ErrorCode::kNotFound: return KF_NOT_FOUND;
    case ErrorCode::kIo: return KF_IO;
    case ErrorCode::kParse: return KF_PARSE;
    case ErrorCode::kProtocol: return KF_PROTOCOL;
    case ErrorCode::kSignature: return KF_SIGNATURE;
    case ErrorCode::kTimeout: return KF_TIMEOUT;
    case ErrorCode::kTransport: return KF_TRANSPORT;
    case ErrorCode::kEnvironment: return KF_ENVIRONMENT;
    case ErrorCode::kInternal: return KF_INTERNAL;
  }
  return KF_INTERNAL;
}

template <typename F>
kf_status guarded(F&& body) {
  last_error.clear();
  try {
    body();
    return KF_OK;
  } catch (const Error& e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const std::exception& e) {
    last_error = e.what();
    return KF_INTERNAL;
  }
}

void require(const void* p, const char* name) {
  if (p == nullptr) {
    throw Error(ErrorCode::kInvalidArgument, std::string(name) + " must not be NULL");
  }
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  if (out != nullptr) *out = dup(s);
}

milliseconds or_default(int timeout_ms, milliseconds fallback) {
  return timeout_ms > 0 ? milliseconds(timeout_ms) : fallback;
}

kernelforge::registry::KernelDescriptor descriptor(const char* language) {
  require(language, "language");
  kernelforge::registry::register_builtin_languages();
  return kernelforge::registry::descriptor_for(language);
}

const kernelforge::registry::LanguageEntry& entry_of(
    const kernelforge::registry::KernelDescriptor& d) {
  const auto* entry = kernelforge::registry::find_language(d.entry);
  if (entry == nullptr) throw Error(ErrorCode::kNotFound, "unknown language " + d.entry);
  return *entry;
}

kernelforge::client::KernelClient& client_of(kf_client* c) {
  require(c, "client");
  return *c->client;
}

}  // namespace

extern "C" {

const char* kf_version(void) { return kernelforge::kVersion; }

const char* kf_status_name(kf_status status) {
  switch (status) {
    case KF_OK: return "ok";
    case KF_INVALID_ARGUMENT: return "invalid argument";
    case KF_NOT_FOUND: return "not found";
    case KF_IO: return "i/o error";
    case KF_PARSE: return "parse error";
    case KF_PROTOCOL: return "protocol error";
    case KF_SIGNATURE: return "signature error";
    case KF_TIMEOUT: return "timeout";
    case KF_TRANSPORT: return "transport error";
    case KF_ENVIRONMENT: return "environment error";
    case KF_INTERNAL: return "internal error";
  }
  return "unknown";
}

const char* kf_last_error(void) { return last_error.c_str(); }

void kf_string_free(char* s) { std::free(s); }

void kf_set_log_level(int level) {
  spdlog::set_level(level >= 2   ? spdlog::level::debug
                    : level == 1 ? spdlog::level::info
                                 : spdlog::level::warn);
}

kf_status kf_languages(char** out) {
  return guarded([&] {
    require(out, "out");
    kernelforge::registry::register_builtin_languages();
    std::string text;
    for (const auto& name : kernelforge::registry::registered_languages()) {
      text += name + "\n";
    }
    put(out, text);
  });
}

kf_status kf_kernel_spec(const char* language, const char* launcher, char** out) {
  return guarded([&] {
    require(launcher, "launcher");
    require(out, "out");
    put(out, kernelforge::registry::generate_kernel_spec(descriptor(language), launcher));
  });
}

kf_status kf_kernel_install(const char* language, const char* launcher, const char* logo,
                            char** out_dir) {
  return guarded([&] {
    require(launcher, "launcher");
    auto d = descriptor(language);
    if (logo != nullptr && *logo != '\0') d.logo_path = fs::path(logo);
    const auto& mode = entry_of(d).mode;
    const std::string spec = kernelforge::registry::generate_kernel_spec(d, launcher);
    const fs::path dir = kernelforge::registry::install_kernel(
        d, spec, kernelforge::highlight::mode_file_name(mode),
        kernelforge::highlight::emit_mode(mode, entry_of(d).info.mimetype));
    put(out_dir, dir.string());
  });
}

kf_status kf_dockerfile(const char* language, char** out) {
  return guarded([&] {
    require(out, "out");
    put(out, kernelforge::registry::emit_dockerfile(descriptor(language)));
  });
}

kf_status kf_mode_script(const char* language, char** out_script, char** out_file_name) {
  return guarded([&] {
    require(out_script, "out_script");
    const auto& entry = entry_of(descriptor(language));
    std::string script = kernelforge::highlight::emit_mode(entry.mode, entry.info.mimetype);
    put(out_file_name, kernelforge::highlight::mode_file_name(entry.mode));
    *out_script = dup(script);
  });
}

kf_status kf_doctor(char** out_report, int* out_ok) {
  return guarded([&] {
    require(out_report, "out_report");
    auto report = kernelforge::registry::verify_environment();
    if (out_ok != nullptr) *out_ok = report.ok() ? 1 : 0;
    *out_report = dup(report.to_string());
  });
}

kf_status kf_notebook_run(const char* language) {
  return guarded([&] {
    auto handle = kernelforge::registry::serve_notebook(descriptor(language));
    handle->serve();
    handle->logs([](const std::string& line) { std::cerr << line << "\n"; });
    while (handle->running()) std::this_thread::sleep_for(milliseconds(200));
  });
}

kf_status kf_kernel_open(const char* connection_file, const char* language,
                         kf_kernel** out) {
  return guarded([&] {
    require(connection_file, "connection_file");
    require(out, "out");
    auto d = descriptor(language);
    auto info = kernelforge::wire::parse_connection_file(connection_file);
    auto kernel = std::make_unique<kf_kernel>();
    kernel->server = kernelforge::registry::make_kernel_server(d);
    kernel->service = kernelforge::wire::run_channels(info, kernel->server->dispatcher());
    spdlog::info("{} kernel listening on {}:{} (shell)", d.language_name, info.ip,
                 info.shell_port);
    *out = kernel.release();
  });
}

kf_status kf_kernel_wait(kf_kernel* kernel, int timeout_ms) {
  return guarded([&] {
    require(kernel, "kernel");
    if (timeout_ms < 0) {
      kernel->service->wait();
    } else if (!kernel->service->wait_for(milliseconds(timeout_ms))) {
      throw Error(ErrorCode::kTimeout, "kernel still running");
    }
  });
}

kf_status kf_kernel_stop(kf_kernel* kernel) {
  return guarded([&] {
    require(kernel, "kernel");
    kernel->service->stop();
  });
}

void kf_kernel_close(kf_kernel* kernel) {
  if (kernel == nullptr) return;
  try {
    kernel->service.reset();
  } catch (...) {
  }
  delete kernel;
}

kf_status kf_client_connect(const char* connection_file, int timeout_ms,
                            kf_client** out) {
  return guarded([&] {
    require(connection_file, "connection_file");
    require(out, "out");
    auto info = kernelforge::wire::parse_connection_file(connection_file);
    auto c = std::make_unique<kf_client>();
    c->client = kernelforge::client::KernelClient::connect(
        info, or_default(timeout_ms, kernelforge::client::kInfoTimeout));
    *out = c.release();
  });
}

kf_status kf_client_spawn(const char* language, const char* launcher, int timeout_ms,
                          kf_client** out) {
  return guarded([&] {
    require(language, "language");
    require(launcher, "launcher");
    require(out, "out");
    auto c = std::make_unique<kf_client>();
    c->client = kernelforge::client::KernelClient::spawn(
        language, launcher, or_default(timeout_ms, milliseconds(5000)));
    *out = c.release();
  });
}

kf_status kf_client_execute(kf_client* client, const char* code, int timeout_ms,
                            char** out_json) {
  return guarded([&] {
    require(code, "code");
    require(out_json, "out_json");
    auto run = client_of(client).exec_collect(
        code, or_default(timeout_ms, kernelforge::client::kExecuteTimeout));
    *out_json = dup(kernelforge::client::to_json(run).dump());
  });
}

kf_status kf_client_kernel_info(kf_client* client, char** out_json) {
  return guarded([&] {
    require(out_json, "out_json");
    *out_json = dup(client_of(client).kernel_info().dump());
  });
}

kf_status kf_client_complete(kf_client* client, const char* code, size_t cursor,
                             char** out_json) {
  return guarded([&] {
    require(code, "code");
    require(out_json, "out_json");
    *out_json = dup(client_of(client).complete(code, cursor).dump());
  });
}

kf_status kf_client_is_complete(kf_client* client, const char* code, char** out_json) {
  return guarded([&] {
    require(code, "code");
    require(out_json, "out_json");
    *out_json = dup(client_of(client).is_complete(code).dump());
  });
}

kf_status kf_client_run_cell(kf_client* client, const char* code, char** out_transcript,
                             int* out_failed) {
  return guarded([&] {
    require(code, "code");
    require(out_transcript, "out_transcript");
    auto transcript = client_of(client).run_cells({code});
    if (out_failed != nullptr) *out_failed = transcript.failed() ? 1 : 0;
    *out_transcript = dup(transcript.to_string());
  });
}

kf_status kf_client_run_script(kf_client* client, const char* path, char** out_transcript,
                               int* out_failed) {
  return guarded([&] {
    require(path, "path");
    require(out_transcript, "out_transcript");
    auto transcript = client_of(client).run_script(path);
    if (out_failed != nullptr) *out_failed = transcript.failed() ? 1 : 0;
    *out_transcript = dup(transcript.to_string());
  });
}

kf_status kf_client_ping(kf_client* client, int timeout_ms) {
  return guarded([&] {
    if (!client_of(client).ping(kernelforge::wire::new_uuid(),
                                or_default(timeout_ms, milliseconds(1000)))) {
      throw Error(ErrorCode::kTimeout, "no heartbeat echo");
    }
  });
}

kf_status kf_client_shutdown(kf_client* client, int restart, char** out_json) {
  return guarded([&] {
    auto reply = client_of(client).shutdown(restart != 0);
    put(out_json, reply.dump());
  });
}

void kf_client_close(kf_client* client) { delete client; }

}  // extern "C"
