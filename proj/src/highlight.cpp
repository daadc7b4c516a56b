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

#include "kernelforge/highlight.hpp"

#include <algorithm>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "kernelforge/error.hpp"

namespace kernelforge::highlight {

namespace {

constexpr std::string_view kInitialKey = "start";

std::string quoted(std::string_view s) { return nlohmann::json(s).dump(); }

std::string where(const State& state, std::size_t index) {
  return "state '" + state.name + "' rule " + std::to_string(index);
}

// Body of a JS regex literal: unescaped '/' and line breaks are escaped.
std::string js_regex_body(std::string_view regex) {
  std::string out;
  bool escaped = false;
  bool in_class = false;
  for (char c : regex) {
    if (escaped) {
      out.push_back(c);
      escaped = false;
      continue;
    }
    switch (c) {
      case '\\':
        escaped = true;
        out.push_back(c);
        break;
      case '[':
        in_class = true;
        out.push_back(c);
        break;
      case ']':
        in_class = false;
        out.push_back(c);
        break;
      case '/':
        out += in_class ? "/" : "\\/";
        break;
      case '\n':
        out += "\\n";
        break;
      case '\r':
        out += "\\r";
        break;
      default:
        out.push_back(c);
    }
  }
  return out;
}

}  // namespace

bool is_known_token_class(std::string_view token) {
  static const std::set<std::string, std::less<>> kClasses = {
      "keyword",    "atom",     "number",  "def",       "variable", "variable-2",
      "variable-3", "type",     "property", "operator", "comment",  "string",
      "string-2",   "meta",     "qualifier", "builtin", "bracket",  "tag",
      "attribute",  "header",   "quote",   "hr",        "link",     "error",
      "punctuation", "positive", "negative", "em",      "strong",
  };
  return kClasses.count(token) != 0;
}

void validate(const Mode& mode) {
  if (mode.name.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "mode name must not be empty");
  }
  if (mode.states.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                "mode '" + mode.name + "' has no states");
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < mode.states.size(); ++i) {
    const auto& state = mode.states[i];
    if (state.name.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "state names must not be empty");
    }
    if (!names.insert(state.name).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate state '" + state.name + "'");
    }
    if (i != 0 && state.name == kInitialKey) {
      throw Error(ErrorCode::kInvalidArgument,
                  "only the initial state may be named 'start'");
    }
  }
  for (const auto& state : mode.states) {
    for (std::size_t r = 0; r < state.rules.size(); ++r) {
      const Rule& rule = state.rules[r];
      try {
        std::regex compiled(rule.regex, std::regex::ECMAScript);
      } catch (const std::regex_error& e) {
        throw Error(ErrorCode::kInvalidArgument, "invalid regex in " +
                                                     where(state, r) + ": " +
                                                     rule.regex + " (" + e.what() + ")");
      }
      if (rule.tokens.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "no tokens in " + where(state, r));
      }
      if (rule.next && names.count(*rule.next) == 0) {
        throw Error(ErrorCode::kInvalidArgument,
                    "unknown next state '" + *rule.next + "' in " + where(state, r));
      }
    }
  }
}

std::string escape_regex(std::string_view literal) {
  static constexpr std::string_view kMeta = R"(\^$.|?*+()[]{})";
  std::string out;
  for (char c : literal) {
    if (kMeta.find(c) != std::string_view::npos) out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

Mode mode_from_keywords(std::string name, const std::set<std::string>& keywords) {
  State ini{"ini", {}};
  std::vector<std::string> ordered;
  for (const auto& k : keywords) {
    if (!k.empty()) ordered.push_back(k);
  }
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const std::string& a, const std::string& b) {
                     return a.size() > b.size();
                   });
  if (!ordered.empty()) {
    std::string alternation;
    for (const auto& k : ordered) {
      if (!alternation.empty()) alternation += '|';
      alternation += escape_regex(k);
    }
    ini.rules.push_back({"\\b(?:" + alternation + ")\\b", {"keyword"}, std::nullopt});
  }
  ini.rules.push_back({"[0-9]+", {"number"}, std::nullopt});
  ini.rules.push_back({"[a-zA-Z][a-zA-Z0-9_]*", {"variable"}, std::nullopt});
  return Mode{std::move(name), {std::move(ini)}};
}

std::string emit_mode(const Mode& mode, std::string_view mime) {
  validate(mode);
  const std::string& initial = mode.states.front().name;
  auto state_key = [&](const std::string& name) {
    return name == initial ? std::string(kInitialKey) : name;
  };

  std::ostringstream js;
  js << "// CodeMirror simple mode for " << mode.name
     << ". Generated by kernelforge; do not edit.\n"
     << "(function (mod) {\n"
     << "  if (typeof exports == \"object\" && typeof module == \"object\")\n"
     << "    mod(require(\"codemirror/lib/codemirror\"), "
        "require(\"codemirror/addon/mode/simple\"));\n"
     << "  else if (typeof define == \"function\" && define.amd)\n"
     << "    define([\"codemirror/lib/codemirror\", "
        "\"codemirror/addon/mode/simple\"], mod);\n"
     << "  else\n"
     << "    mod(CodeMirror);\n"
     << "})(function (CodeMirror) {\n"
     << "  \"use strict\";\n\n"
     << "  CodeMirror.defineSimpleMode(" << quoted(mode.name) << ", {\n";
  for (std::size_t s = 0; s < mode.states.size(); ++s) {
    const State& state = mode.states[s];
    js << "    " << quoted(state_key(state.name)) << ": [\n";
    for (std::size_t r = 0; r < state.rules.size(); ++r) {
      const Rule& rule = state.rules[r];
      for (const auto& token : rule.tokens) {
        if (!is_known_token_class(token)) {
          spdlog::warn("mode {}: unknown token class '{}' passed through",
                       mode.name, token);
        }
      }
      js << "      {regex: /" << js_regex_body(rule.regex) << "/, token: ";
      if (rule.tokens.size() == 1) {
        js << quoted(rule.tokens.front());
      } else {
        js << "[";
        for (std::size_t t = 0; t < rule.tokens.size(); ++t) {
          js << (t ? ", " : "") << quoted(rule.tokens[t]);
        }
        js << "]";
      }
      if (rule.next) js << ", next: " << quoted(state_key(*rule.next));
      if (rule.indent) js << ", indent: true";
      if (rule.dedent) js << ", dedent: true";
      js << "}" << (r + 1 < state.rules.size() ? "," : "") << "\n";
    }
    js << "    ]" << (s + 1 < mode.states.size() ? "," : "") << "\n";
  }
  js << "  });\n";
  if (!mime.empty()) {
    js << "  CodeMirror.defineMIME(" << quoted(mime) << ", " << quoted(mode.name)
       << ");\n";
  }
  js << "});\n";
  return js.str();
}

std::string mode_file_name(const Mode& mode) { return mode.name + ".mode.js"; }

}  // namespace kernelforge::highlight
