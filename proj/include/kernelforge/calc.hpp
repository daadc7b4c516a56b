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

// CALC: a calculator language with integer variables, addition and
// multiplication, plus a `show` command rendering an expression debugger.
//
//   Cmd ::= Id "=" Exp | "show" Exp | Exp
//   Exp ::= Exp "+" Exp  (left, lowest)
//         | Exp "*" Exp  (left)
//         | Id | Num | "(" Exp ")"
//   Id  ::= [a-zA-Z][a-zA-Z0-9_]*    ("show" is reserved)
//   Num ::= [\-]?[0-9]+               (signed 64-bit)

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

#include "kernelforge/highlight.hpp"
#include "kernelforge/protocol.hpp"

namespace kernelforge::calc {

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Var {
  std::string name;
};
struct Num {
  std::int64_t value = 0;
};
struct Mul {
  ExprPtr left;
  ExprPtr right;
};
struct Add {
  ExprPtr left;
  ExprPtr right;
};

struct Expr {
  std::variant<Var, Num, Mul, Add> node;
};

// Structural equality.
bool operator==(const Expr& a, const Expr& b);

ExprPtr var(std::string name);
ExprPtr num(std::int64_t value);
ExprPtr mul(ExprPtr left, ExprPtr right);
ExprPtr add(ExprPtr left, ExprPtr right);

struct Assign {
  std::string name;
  ExprPtr value;
};
struct Eval {
  ExprPtr expr;
};
struct Show {
  ExprPtr expr;
};

using Command = std::variant<Assign, Eval, Show>;

bool operator==(const Command& a, const Command& b);

using Environment = std::map<std::string, std::int64_t>;

struct ParseError {
  std::size_t offset = 0;
  std::string expected;
  bool at_end = false;  // input ran out: the command is incomplete
};

using ParseOutcome = std::variant<Command, ParseError>;

ParseOutcome parse_command(std::string_view text);

bool is_identifier(std::string_view text);

// Thrown by eval/exec: "Undefined variable <name>" or "Arithmetic overflow".
class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::int64_t eval(const Expr& expr, const Environment& env);

// Show is evaluated like Eval; the REPL renders it before reaching exec.
std::pair<std::int64_t, Environment> exec(const Command& command, Environment env);

// Infix, single spaces, parentheses only where precedence requires them.
std::string to_source(const Expr& expr);

// Static HTML: one "name: value" line plus a range input per binding (sorted
// by name), then "<expr>: <value>".
std::string render_debugger(const Expr& expr, const Environment& env);

protocol::Completeness is_complete(std::string_view text);

// The stateful REPL behind one kernel session.
class CalcRepl {
 public:
  protocol::ExecutionResult handle(std::string_view line);
  protocol::CompletionResult complete(std::string_view prefix) const;

  const Environment& environment() const { return env_; }
  Environment& environment() { return env_; }

 private:
  Environment env_;
};

// Handler and completor share one fresh environment.
protocol::ReplDefinition make_repl();

const std::set<std::string>& keywords();

highlight::Mode mode();

}  // namespace kernelforge::calc
