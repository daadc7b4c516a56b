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

#include "kernelforge/calc.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <sstream>

namespace kernelforge::calc {

namespace {

// Bounds recursion in eval, rendering and destruction of deep trees.
constexpr int kMaxDepth = 2048;

bool is_alpha(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
bool is_blank(std::string_view text) {
  return std::all_of(text.begin(), text.end(), is_space);
}

enum class Tok { kIdent, kShow, kNumber, kPlus, kStar, kEquals, kLParen, kRParen, kEnd };

struct Token {
  Tok kind = Tok::kEnd;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::int64_t value = 0;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Command command() {
    Token first = peek();
    if (first.kind == Tok::kEnd) fail(first, "command");
    if (first.kind == Tok::kShow) {
      next();
      auto e = expression();
      finish();
      return Show{std::move(e.expr)};
    }
    if (first.kind == Tok::kIdent) {
      std::size_t saved = pos_;
      next();
      if (peek().kind == Tok::kEquals) {
        next();
        auto e = expression();
        finish();
        return Assign{std::string(text_.substr(first.begin, first.end - first.begin)),
                      std::move(e.expr)};
      }
      pos_ = saved;
    }
    auto e = expression();
    finish();
    return Eval{std::move(e.expr)};
  }

 private:
  struct Parsed {
    ExprPtr expr;
    int depth = 1;
  };

  [[noreturn]] void fail(const Token& at, std::string expected) {
    throw ParseError{at.begin, std::move(expected), at.kind == Tok::kEnd};
  }

  void check_depth(const Token& at, int depth) {
    if (depth > kMaxDepth) {
      throw ParseError{at.begin, "a less deeply nested expression", false};
    }
  }

  Token lex(std::size_t& pos) const {
    while (pos < text_.size() && is_space(text_[pos])) ++pos;
    Token t;
    t.begin = pos;
    if (pos >= text_.size()) {
      t.kind = Tok::kEnd;
      t.end = pos;
      return t;
    }
    char c = text_[pos];
    auto single = [&](Tok kind) {
      t.kind = kind;
      t.end = ++pos;
      return t;
    };
    switch (c) {
      case '+': return single(Tok::kPlus);
      case '*': return single(Tok::kStar);
      case '=': return single(Tok::kEquals);
      case '(': return single(Tok::kLParen);
      case ')': return single(Tok::kRParen);
      default: break;
    }
    if (is_alpha(c)) {
      std::size_t end = pos + 1;
      while (end < text_.size() &&
             (is_alpha(text_[end]) || is_digit(text_[end]) || text_[end] == '_')) {
        ++end;
      }
      t.kind = text_.substr(pos, end - pos) == "show" ? Tok::kShow : Tok::kIdent;
      t.end = pos = end;
      return t;
    }
    if (is_digit(c) || c == '-') {
      std::size_t end = pos + (c == '-' ? 1 : 0);
      if (end >= text_.size() || !is_digit(text_[end])) {
        // A lone '-' needs a digit next.
        throw ParseError{end, "digit", end >= text_.size()};
      }
      while (end < text_.size() && is_digit(text_[end])) ++end;
      std::int64_t value = 0;
      auto [ptr, ec] = std::from_chars(text_.data() + pos, text_.data() + end, value);
      if (ec != std::errc() || ptr != text_.data() + end) {
        throw ParseError{pos, "an integer literal within the signed 64-bit range",
                         false};
      }
      t.kind = Tok::kNumber;
      t.value = value;
      t.end = pos = end;
      return t;
    }
    throw ParseError{pos, "expression or operator", false};
  }

  Token peek() const {
    std::size_t p = pos_;
    return lex(p);
  }
  Token next() { return lex(pos_); }

  void finish() {
    Token t = peek();
    if (t.kind != Tok::kEnd) fail(t, "'+', '*' or end of input");
  }

  Parsed expression() {
    Parsed left = term();
    while (peek().kind == Tok::kPlus) {
      Token op = next();
      Parsed right = term();
      int depth = std::max(left.depth, right.depth) + 1;
      check_depth(op, depth);
      left = {add(std::move(left.expr), std::move(right.expr)), depth};
    }
    return left;
  }

  Parsed term() {
    Parsed left = atom();
    while (peek().kind == Tok::kStar) {
      Token op = next();
      Parsed right = atom();
      int depth = std::max(left.depth, right.depth) + 1;
      check_depth(op, depth);
      left = {mul(std::move(left.expr), std::move(right.expr)), depth};
    }
    return left;
  }

  Parsed atom() {
    Token t = next();
    switch (t.kind) {
      case Tok::kIdent:
        return {var(std::string(text_.substr(t.begin, t.end - t.begin))), 1};
      case Tok::kNumber:
        return {num(t.value), 1};
      case Tok::kLParen: {
        check_depth(t, ++nesting_);
        Parsed inner = expression();
        Token close = next();
        if (close.kind != Tok::kRParen) fail(close, "')'");
        --nesting_;
        return inner;
      }
      default:
        fail(t, "expression");
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int nesting_ = 0;
};

std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t out = 0;
  if (__builtin_add_overflow(a, b, &out)) throw EvalError("Arithmetic overflow");
  return out;
}

std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
  std::int64_t out = 0;
  if (__builtin_mul_overflow(a, b, &out)) throw EvalError("Arithmetic overflow");
  return out;
}

int precedence(const Expr& e) {
  if (std::holds_alternative<Add>(e.node)) return 1;
  if (std::holds_alternative<Mul>(e.node)) return 2;
  return 3;
}

void write_source(std::ostream& out, const Expr& e, int min_precedence) {
  const bool parens = precedence(e) < min_precedence;
  if (parens) out << '(';
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Var>) {
          out << n.name;
        } else if constexpr (std::is_same_v<T, Num>) {
          out << n.value;
        } else if constexpr (std::is_same_v<T, Add>) {
          write_source(out, *n.left, 1);
          out << " + ";
          write_source(out, *n.right, 2);
        } else {
          write_source(out, *n.left, 2);
          out << " * ";
          write_source(out, *n.right, 3);
        }
      },
      e.node);
  if (parens) out << ')';
}

std::string html_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::int64_t saturate(__int128 v) {
  constexpr auto lo = std::numeric_limits<std::int64_t>::min();
  constexpr auto hi = std::numeric_limits<std::int64_t>::max();
  if (v < lo) return lo;
  if (v > hi) return hi;
  return static_cast<std::int64_t>(v);
}

protocol::SourceSpan span_at(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  protocol::SourceSpan span;
  span.begin = offset;
  span.end = offset < text.size() ? offset + 1 : offset;
  for (std::size_t i = 0; i < offset; ++i) {
    if (text[i] == '\n') {
      ++span.line;
      span.column = 1;
    } else {
      ++span.column;
    }
  }
  return span;
}

}  // namespace

bool operator==(const Expr& a, const Expr& b) {
  if (a.node.index() != b.node.index()) return false;
  return std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(b.node);
        if constexpr (std::is_same_v<T, Var>) {
          return x.name == y.name;
        } else if constexpr (std::is_same_v<T, Num>) {
          return x.value == y.value;
        } else {
          return *x.left == *y.left && *x.right == *y.right;
        }
      },
      a.node);
}

bool operator==(const Command& a, const Command& b) {
  if (a.index() != b.index()) return false;
  if (const auto* x = std::get_if<Assign>(&a)) {
    const auto& y = std::get<Assign>(b);
    return x->name == y.name && *x->value == *y.value;
  }
  if (const auto* x = std::get_if<Eval>(&a)) return *x->expr == *std::get<Eval>(b).expr;
  return *std::get<Show>(a).expr == *std::get<Show>(b).expr;
}

ExprPtr var(std::string name) {
  return std::make_shared<const Expr>(Expr{Var{std::move(name)}});
}
ExprPtr num(std::int64_t value) { return std::make_shared<const Expr>(Expr{Num{value}}); }
ExprPtr mul(ExprPtr left, ExprPtr right) {
  return std::make_shared<const Expr>(Expr{Mul{std::move(left), std::move(right)}});
}
ExprPtr add(ExprPtr left, ExprPtr right) {
  return std::make_shared<const Expr>(Expr{Add{std::move(left), std::move(right)}});
}

ParseOutcome parse_command(std::string_view text) {
  try {
    return Parser(text).command();
  } catch (ParseError& e) {
    return std::move(e);
  }
}

bool is_identifier(std::string_view text) {
  if (text.empty() || !is_alpha(text.front())) return false;
  return std::all_of(text.begin() + 1, text.end(),
                     [](char c) { return is_alpha(c) || is_digit(c) || c == '_'; });
}

std::int64_t eval(const Expr& expr, const Environment& env) {
  return std::visit(
      [&](const auto& n) -> std::int64_t {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Var>) {
          auto it = env.find(n.name);
          if (it == env.end()) throw EvalError("Undefined variable " + n.name);
          return it->second;
        } else if constexpr (std::is_same_v<T, Num>) {
          return n.value;
        } else {
          // Left operand first, so the reported error does not depend on
          // argument evaluation order.
          std::int64_t left = eval(*n.left, env);
          std::int64_t right = eval(*n.right, env);
          if constexpr (std::is_same_v<T, Add>) return checked_add(left, right);
          return checked_mul(left, right);
        }
      },
      expr.node);
}

std::pair<std::int64_t, Environment> exec(const Command& command, Environment env) {
  if (const auto* assign = std::get_if<Assign>(&command)) {
    std::int64_t value = eval(*assign->value, env);
    env[assign->name] = value;
    return {value, std::move(env)};
  }
  const Expr& e = std::holds_alternative<Eval>(command) ? *std::get<Eval>(command).expr
                                                         : *std::get<Show>(command).expr;
  std::int64_t value = eval(e, env);
  return {value, std::move(env)};
}

std::string to_source(const Expr& expr) {
  std::ostringstream out;
  write_source(out, expr, 1);
  return out.str();
}

std::string render_debugger(const Expr& expr, const Environment& env) {
  const std::int64_t result = eval(expr, env);
  std::ostringstream html;
  html << "<div class=\"calc-debugger\">\n";
  for (const auto& [name, value] : env) {
    const __int128 reach = std::max<__int128>(10, value < 0 ? -__int128{value} : value);
    html << "  <div class=\"calc-binding\"><label for=\"calc-var-" << name << "\">"
         << name << ": " << value << "</label> <input type=\"range\" id=\"calc-var-"
         << name << "\" name=\"" << name << "\" min=\"" << saturate(value - reach)
         << "\" max=\"" << saturate(value + reach) << "\" value=\"" << value
         << "\" disabled></div>\n";
  }
  html << "  <div class=\"calc-result\">" << html_escape(to_source(expr)) << ": "
       << result << "</div>\n";
  html << "</div>\n";
  return html.str();
}

protocol::Completeness is_complete(std::string_view text) {
  if (is_blank(text)) return protocol::Completeness::kComplete;
  auto outcome = parse_command(text);
  if (std::holds_alternative<Command>(outcome)) return protocol::Completeness::kComplete;
  return std::get<ParseError>(outcome).at_end ? protocol::Completeness::kIncomplete
                                              : protocol::Completeness::kInvalid;
}

protocol::ExecutionResult CalcRepl::handle(std::string_view line) {
  protocol::ExecutionResult result;
  if (is_blank(line)) return result;
  auto outcome = parse_command(line);
  if (const auto* error = std::get_if<ParseError>(&outcome)) {
    result.diagnostics.push_back({"Parse error", span_at(line, error->offset)});
    return result;
  }
  const Command& command = std::get<Command>(outcome);
  try {
    if (const auto* show = std::get_if<Show>(&command)) {
      result.outputs["text/html"] = render_debugger(*show->expr, env_);
      return result;
    }
    auto [value, env] = exec(command, env_);
    env_ = std::move(env);
    result.outputs["text/plain"] = std::to_string(value);
  } catch (const EvalError& e) {
    result.diagnostics.push_back({e.what(), std::nullopt});
  }
  return result;
}

protocol::CompletionResult CalcRepl::complete(std::string_view prefix) const {
  std::size_t start = prefix.size();
  while (start > 0 && is_alpha(prefix[start - 1])) --start;
  const std::string_view stem = prefix.substr(start);
  protocol::CompletionResult result;
  result.position = start;
  for (const auto& [name, value] : env_) {
    if (std::string_view(name).starts_with(stem)) result.suggestions.push_back(name);
  }
  return result;
}

protocol::ReplDefinition make_repl() {
  auto repl = std::make_shared<CalcRepl>();
  protocol::ReplDefinition def;
  def.handler = [repl](std::string_view line) { return repl->handle(line); };
  def.completor = [repl](std::string_view prefix) { return repl->complete(prefix); };
  def.is_complete = [](std::string_view text) { return is_complete(text); };
  return def;
}

const std::set<std::string>& keywords() {
  static const std::set<std::string> kKeywords = {"show"};
  return kKeywords;
}

highlight::Mode mode() { return highlight::mode_from_keywords("Calc", keywords()); }

}  // namespace kernelforge::calc
