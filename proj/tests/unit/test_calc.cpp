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

#include <limits>
#include <random>
#include <regex>

#include "kernelforge/calc.hpp"
#include "../support/calc_oracle.hpp"

using namespace kernelforge;
using namespace kernelforge::calc;

namespace {

std::string sexpr(const Expr& e) {
  return std::visit(
      [](const auto& n) -> std::string {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Var>) {
          return n.name;
        } else if constexpr (std::is_same_v<T, Num>) {
          return std::to_string(n.value);
        } else if constexpr (std::is_same_v<T, Add>) {
          return "(+ " + sexpr(*n.left) + " " + sexpr(*n.right) + ")";
        } else {
          return "(* " + sexpr(*n.left) + " " + sexpr(*n.right) + ")";
        }
      },
      e.node);
}

std::string sexpr(const Command& c) {
  if (const auto* a = std::get_if<Assign>(&c)) return "(= " + a->name + " " + sexpr(*a->value) + ")";
  if (const auto* s = std::get_if<Show>(&c)) return "(show " + sexpr(*s->expr) + ")";
  return sexpr(*std::get<Eval>(c).expr);
}

const Command& parsed(const ParseOutcome& o) {
  REQUIRE(std::holds_alternative<Command>(o));
  return std::get<Command>(o);
}

ExprPtr expr_of(const Command& c) {
  if (const auto* a = std::get_if<Assign>(&c)) return a->value;
  if (const auto* s = std::get_if<Show>(&c)) return s->expr;
  return std::get<Eval>(c).expr;
}

std::string eval_text(const Expr& e, const Environment& env) {
  try {
    return std::to_string(eval(e, env));
  } catch (const EvalError& err) {
    return err.what();
  }
}

std::string oracle_text(const oracle::Value& v) {
  if (v.value) return std::to_string(*v.value);
  if (v.error == "overflow") return "Arithmetic overflow";
  return "Undefined variable " + v.error.substr(std::string("undefined ").size());
}

std::string plain(const protocol::ExecutionResult& r) {
  auto it = r.outputs.find("text/plain");
  return it == r.outputs.end() ? "" : it->second;
}

}  // namespace

TEST_SUITE("calc") {

TEST_CASE("precedence and associativity") {
  CHECK(sexpr(parsed(parse_command("1 + 2 * 3"))) == "(+ 1 (* 2 3))");
  CHECK(sexpr(parsed(parse_command("1 * 2 + 3"))) == "(+ (* 1 2) 3)");
  CHECK(sexpr(parsed(parse_command("1 + 2 + 3"))) == "(+ (+ 1 2) 3)");
  CHECK(sexpr(parsed(parse_command("a * b * c"))) == "(* (* a b) c)");
  CHECK(sexpr(parsed(parse_command("(1 + 2) * 3"))) == "(* (+ 1 2) 3)");
  CHECK(sexpr(parsed(parse_command("x = -4 * y"))) == "(= x (* -4 y))");
  CHECK(sexpr(parsed(parse_command("show 2 * y"))) == "(show (* 2 y))");
  CHECK(eval(*expr_of(parsed(parse_command("1 + 2 * 3"))), {}) == 7);
}

TEST_CASE("parse errors") {
  for (const char* bad : {"1 -2", "1 +", "x =", "= 3", "show", "show = 1", "(1 + 2",
                          "1 + 2)", "$", "2x", "--1", "1 - 2", "x y",
                          "99999999999999999999", "_a"}) {
    CAPTURE(bad);
    CHECK(std::holds_alternative<ParseError>(parse_command(bad)));
  }
  auto err = std::get<ParseError>(parse_command("1 -2"));
  CHECK(err.offset == 2);
  CHECK_FALSE(err.at_end);
  CHECK(std::get<ParseError>(parse_command("x = ")).at_end);
}

TEST_CASE("integer limits") {
  CHECK(eval(*expr_of(parsed(parse_command("-9223372036854775808"))), {}) ==
        std::numeric_limits<std::int64_t>::min());
  CHECK(eval_text(*expr_of(parsed(parse_command("9223372036854775807 + 1"))), {}) ==
        "Arithmetic overflow");
  CHECK(eval_text(*expr_of(parsed(parse_command("4294967296 * 4294967296"))), {}) ==
        "Arithmetic overflow");
  CHECK(eval_text(*expr_of(parsed(parse_command("q + 1"))), {}) == "Undefined variable q");
}

TEST_CASE("deep nesting is rejected, not a crash") {
  std::string deep(100000, '(');
  deep += "1";
  deep += std::string(100000, ')');
  CHECK(std::holds_alternative<ParseError>(parse_command(deep)));
  std::string ok(500, '(');
  ok += "1" + std::string(500, ')');
  CHECK(std::holds_alternative<Command>(parse_command(ok)));

  std::string chain;
  for (int i = 0; i < 100000; ++i) chain += "1+";
  CHECK(std::holds_alternative<ParseError>(parse_command(chain + "1")));
  chain.resize(2 * 1000);
  auto sum = parse_command(chain + "1");
  REQUIRE(std::holds_alternative<Command>(sum));
  CHECK(exec(std::get<Command>(sum), {}).first == 1001);
}

TEST_CASE("errors are reported left to right") {
  Environment env{{"big", std::numeric_limits<std::int64_t>::max()}};
  auto command = std::get<Command>(parse_command("big * 2 + nope"));
  CHECK_THROWS_WITH(exec(command, env), "Arithmetic overflow");
  command = std::get<Command>(parse_command("nope + big * 2"));
  CHECK_THROWS_WITH(exec(command, env), "Undefined variable nope");
}

TEST_CASE("parser and evaluator agree with the oracle") {
  oracle::CommandGenerator gen(2024);
  for (int i = 0; i < 2000; ++i) {
    std::string text = gen.command();
    CAPTURE(text);
    auto ours = parse_command(text);
    auto theirs = oracle::parse(text);
    REQUIRE(theirs);
    REQUIRE(std::holds_alternative<Command>(ours));
    CHECK(sexpr(std::get<Command>(ours)) == oracle::sexpr(*theirs));
    auto env = gen.environment();
    CHECK(eval_text(*expr_of(std::get<Command>(ours)), env) ==
          oracle_text(oracle::evaluate(*theirs->expr, env)));
  }
}

TEST_CASE("accept and reject agree with the oracle on noisy input") {
  std::mt19937_64 rng(99);
  const std::string alphabet = "ab xy12-+*=()show$_";
  for (int i = 0; i < 5000; ++i) {
    std::string text;
    for (std::size_t n = rng() % 12; n > 0; --n) text += alphabet[rng() % alphabet.size()];
    CAPTURE(text);
    auto ours = parse_command(text);
    auto theirs = oracle::parse(text);
    CHECK(std::holds_alternative<Command>(ours) == theirs.has_value());
    if (theirs && std::holds_alternative<Command>(ours)) {
      CHECK(sexpr(std::get<Command>(ours)) == oracle::sexpr(*theirs));
    }
  }
}

TEST_CASE("exec leaves the environment alone except for the assigned name") {
  oracle::CommandGenerator gen(17);
  for (int i = 0; i < 500; ++i) {
    auto env = gen.environment();
    auto outcome = parse_command(gen.command());
    const Command& cmd = parsed(outcome);
    try {
      auto [value, next] = exec(cmd, env);
      if (const auto* a = std::get_if<Assign>(&cmd)) {
        CHECK(next.at(a->name) == value);
        Environment rest = next;
        rest.erase(a->name);
        Environment before = env;
        before.erase(a->name);
        CHECK(rest == before);
      } else {
        CHECK(next == env);
      }
    } catch (const EvalError&) {
    }
  }
}

TEST_CASE("canonical rendering reparses to the same tree") {
  oracle::CommandGenerator gen(23);
  for (int i = 0; i < 1000; ++i) {
    auto expr = expr_of(parsed(parse_command(gen.command())));
    std::string text = to_source(*expr);
    CAPTURE(text);
    auto again = expr_of(parsed(parse_command(text)));
    CHECK(*again == *expr);
    auto env = gen.environment();
    CHECK(eval_text(*again, env) == eval_text(*expr, env));
  }
  CHECK(to_source(*expr_of(parsed(parse_command("(1+2)*(3*(x))")))) == "(1 + 2) * (3 * x)");
  CHECK(to_source(*expr_of(parsed(parse_command("1+(2+3)")))) == "1 + (2 + 3)");
  CHECK(to_source(*expr_of(parsed(parse_command("(1*2)+3")))) == "1 * 2 + 3");
}

TEST_CASE("repl session") {
  CalcRepl repl;
  CHECK(plain(repl.handle("1 + 2")) == "3");
  CHECK(plain(repl.handle("x = 2")) == "2");
  CHECK(plain(repl.handle("y = 1 + x")) == "3");
  auto shown = repl.handle("show 2 * y");
  REQUIRE(shown.outputs.count("text/html") == 1);
  const std::string& html = shown.outputs.at("text/html");
  CHECK(html.find("x: 2") != std::string::npos);
  CHECK(html.find("y: 3") != std::string::npos);
  CHECK(html.find("2 * y: 6") != std::string::npos);
  std::regex range(R"(<input[^>]*type="range")");
  CHECK(std::distance(std::sregex_iterator(html.begin(), html.end(), range),
                      std::sregex_iterator()) == 2);

  auto bad = repl.handle("1 + $");
  CHECK(bad.failed());
  REQUIRE(bad.diagnostics.size() == 1);
  CHECK(bad.diagnostics[0].message == "Parse error");
  REQUIRE(bad.diagnostics[0].location);
  CHECK(bad.diagnostics[0].location->begin == 4);
  CHECK(bad.diagnostics[0].location->column == 5);

  auto undefined = repl.handle("nope * 2");
  CHECK(undefined.failed());
  CHECK(undefined.diagnostics[0].message == "Undefined variable nope");

  auto blank = repl.handle("   ");
  CHECK(blank.outputs.empty());
  CHECK(blank.diagnostics.empty());
}

TEST_CASE("completion from the environment") {
  CalcRepl repl;
  repl.environment() = {{"x", 1}, {"xy", 2}, {"y", 3}};
  auto r = repl.complete("1 + x");
  CHECK(r.position == 4);
  CHECK(r.suggestions == std::vector<std::string>{"x", "xy"});
  CHECK(repl.complete("").suggestions == std::vector<std::string>{"x", "xy", "y"});
  CHECK(repl.complete("x = 1 + ").position == 8);
  CHECK(repl.complete("zz").suggestions.empty());
}

TEST_CASE("completion position matches the trailing-letter oracle") {
  CalcRepl repl;
  repl.environment() = {{"a", 1}, {"ab", 2}, {"b", 3}};
  std::mt19937_64 rng(41);
  const std::string alphabet = "abXY09 +*=()_-";
  std::regex trailing("[a-zA-Z]*$");
  for (int i = 0; i < 500; ++i) {
    std::string prefix;
    for (std::size_t n = rng() % 10; n > 0; --n) prefix += alphabet[rng() % alphabet.size()];
    std::smatch m;
    std::regex_search(prefix, m, trailing);
    auto r = repl.complete(prefix);
    CAPTURE(prefix);
    CHECK(r.position + m.length(0) == prefix.size());
    CHECK(std::is_sorted(r.suggestions.begin(), r.suggestions.end()));
  }
}

TEST_CASE("statement completeness") {
  CHECK(is_complete("x =") == protocol::Completeness::kIncomplete);
  CHECK(is_complete("x = ") == protocol::Completeness::kIncomplete);
  CHECK(is_complete("(1 + 2") == protocol::Completeness::kIncomplete);
  CHECK(is_complete("x = 2") == protocol::Completeness::kComplete);
  CHECK(is_complete("$") == protocol::Completeness::kInvalid);
  CHECK(is_complete("1 -2") == protocol::Completeness::kInvalid);
  CHECK(is_complete("") == protocol::Completeness::kComplete);
  CHECK(is_complete(" \t ") == protocol::Completeness::kComplete);
}

TEST_CASE("handler is total on arbitrary bytes") {
  std::mt19937_64 rng(1);
  CalcRepl repl;
  for (int i = 0; i < 3000; ++i) {
    std::string junk(rng() % 40, '\0');
    for (auto& c : junk) c = static_cast<char>(rng());
    CHECK_NOTHROW(repl.handle(junk));
  }
}

TEST_CASE("highlight mode and keywords") {
  CHECK(keywords() == std::set<std::string>{"show"});
  auto m = mode();
  CHECK(m.name == "Calc");
  REQUIRE(m.states.size() == 1);
  CHECK(m.states[0].name == "ini");
}

}
