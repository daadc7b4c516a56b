/* Copyright 2026 The KernelForge Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to libkernelforge.
 *
 * Every call returns a kf_status. On failure kf_last_error() describes the
 * problem (per thread, valid until the next call). Strings returned through
 * `char**` out-parameters are owned by the caller; release them with
 * kf_string_free(). JSON results are UTF-8 text.
 */

#ifndef KERNELFORGE_H_
#define KERNELFORGE_H_

#include <stddef.h>

#if defined(_WIN32)
#define KF_API __declspec(dllexport)
#else
#define KF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum kf_status {
  KF_OK = 0,
  KF_INVALID_ARGUMENT = 1,
  KF_NOT_FOUND = 2,
  KF_IO = 3,
  KF_PARSE = 4,
  KF_PROTOCOL = 5,
  KF_SIGNATURE = 6,
  KF_TIMEOUT = 7,
  KF_TRANSPORT = 8,
  KF_ENVIRONMENT = 9,
  KF_INTERNAL = 10
} kf_status;

typedef struct kf_kernel kf_kernel;
typedef struct kf_client kf_client;

KF_API const char* kf_version(void);
KF_API const char* kf_status_name(kf_status status);
KF_API const char* kf_last_error(void);
KF_API void kf_string_free(char* s);

/* 0 = warnings only, 1 = info, 2 = debug. Logs go to stderr. */
KF_API void kf_set_log_level(int level);

/* Registry. */

/* Newline-separated entry names. */
KF_API kf_status kf_languages(char** out);
/* `launcher` must be an absolute path. */
KF_API kf_status kf_kernel_spec(const char* language, const char* launcher, char** out);
/* Installs kernel.json, the optional logo and the mode script. `out_dir`
 * receives the kernel directory and may be NULL. */
KF_API kf_status kf_kernel_install(const char* language, const char* launcher,
                                   const char* logo, char** out_dir);
KF_API kf_status kf_dockerfile(const char* language, char** out);
/* `out_file_name` may be NULL. */
KF_API kf_status kf_mode_script(const char* language, char** out_script,
                                char** out_file_name);
/* `out_ok` is 1 when every check passed. */
KF_API kf_status kf_doctor(char** out_report, int* out_ok);
/* Runs `jupyter notebook` and relays its output to stderr until it exits. */
KF_API kf_status kf_notebook_run(const char* language);

/* Kernel side. */

/* Reads the connection file and starts serving `language` on all channels. */
KF_API kf_status kf_kernel_open(const char* connection_file, const char* language,
                                kf_kernel** out);
/* Waits for shutdown. timeout_ms < 0 waits forever. KF_TIMEOUT while the
 * kernel is still running. */
KF_API kf_status kf_kernel_wait(kf_kernel* kernel, int timeout_ms);
KF_API kf_status kf_kernel_stop(kf_kernel* kernel);
KF_API void kf_kernel_close(kf_kernel* kernel);

/* Client side. timeout_ms <= 0 selects the default for the call. */

KF_API kf_status kf_client_connect(const char* connection_file, int timeout_ms,
                                   kf_client** out);
/* Launches `<launcher> serve` for `language` and attaches to it. */
KF_API kf_status kf_client_spawn(const char* language, const char* launcher,
                                 int timeout_ms, kf_client** out);
/* JSON object {code, status, execution_count, reply, trace}. */
KF_API kf_status kf_client_execute(kf_client* client, const char* code, int timeout_ms,
                                   char** out_json);
KF_API kf_status kf_client_kernel_info(kf_client* client, char** out_json);
KF_API kf_status kf_client_complete(kf_client* client, const char* code, size_t cursor,
                                    char** out_json);
KF_API kf_status kf_client_is_complete(kf_client* client, const char* code,
                                       char** out_json);
/* In[n]/Out[n] transcript. `out_failed` (may be NULL) is 1 if any cell
 * failed. */
KF_API kf_status kf_client_run_cell(kf_client* client, const char* code,
                                    char** out_transcript, int* out_failed);
KF_API kf_status kf_client_run_script(kf_client* client, const char* path,
                                      char** out_transcript, int* out_failed);
/* Heartbeat round trip. KF_TIMEOUT when no echo arrives. */
KF_API kf_status kf_client_ping(kf_client* client, int timeout_ms);
KF_API kf_status kf_client_shutdown(kf_client* client, int restart, char** out_json);
KF_API void kf_client_close(kf_client* client);

#ifdef __cplusplus
}
#endif

#endif /* KERNELFORGE_H_ */
