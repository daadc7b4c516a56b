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

// Declarative syntax-highlighting modes, emitted as CodeMirror simple-mode
// registration scripts.

#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace kernelforge::highlight {

struct Rule {
  std::string regex;
  std::vector<std::string> tokens;
  std::optional<std::string> next;
  bool indent = false;
  bool dedent = false;

  friend bool operator==(const Rule&, const Rule&) = default;
};

// Rules are tried in order.
struct State {
  std::string name;
  std::vector<Rule> rules;

  friend bool operator==(const State&, const State&) = default;
};

// The first state is the initial one.
struct Mode {
  std::string name;
  std::vector<State> states;

  friend bool operator==(const Mode&, const Mode&) = default;
};

// Throws Error(kInvalidArgument) naming the offending state and rule.
void validate(const Mode& mode);

// CodeMirror 5 token classes.
bool is_known_token_class(std::string_view token);

// Escapes regex metacharacters so `literal` matches itself.
std::string escape_regex(std::string_view literal);

// Keyword alternation (longest first) followed by number and identifier
// rules, all in one state named "ini".
Mode mode_from_keywords(std::string name, const std::set<std::string>& keywords);

// CodeMirror.defineSimpleMode(...) script. The initial state is emitted under
// the key "start", as simple mode requires. `mime`, when given, is registered
// with CodeMirror.defineMIME.
std::string emit_mode(const Mode& mode, std::string_view mime = {});

// "<name>.mode.js"
std::string mode_file_name(const Mode& mode);

}  // namespace kernelforge::highlight
