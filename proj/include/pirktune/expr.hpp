// Copyright 2026 The pirktune Authors. All Rights Reserved.
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

#pragma once

// Restricted C-like expression and statement grammar shared by every
// description document: Butcher coefficients, IVP right-hand sides, kernel
// computations, loop trip counts and working-set expressions.
//
//   statement := target ('=' | '+=' | '-=' | '*=' | '/=') expr [';']
//   expr      := term (('+' | '-') term)*
//   term      := unary (('*' | '/') unary)*
//   unary     := ('-' | '+') unary | primary
//   primary   := number | ident | ident '[' expr ']'... | call '(' args ')'
//              | '%in' '[' expr ']' | '%RHS' ['(' ident ('[' expr ']')* ')']
//              | '(' expr ')'
//   call      := exp | pow | sin | cos | sqrt | fabs

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "pirktune/error.hpp"

namespace pirktune {

struct Expr {
  enum class Kind { literal, ident, access, neg, add, sub, mul, div, call, input, rhs };

  Kind kind = Kind::literal;
  double value = 0.0;
  std::string name;        // identifier, array, function, or %RHS input array
  std::vector<Expr> args;  // operands, indices, call arguments

  static Expr lit(double v) { return Expr{Kind::literal, v, {}, {}}; }
  static Expr id(std::string n) { return Expr{Kind::ident, 0.0, std::move(n), {}}; }
  static Expr access(std::string n, std::vector<Expr> idx) {
    return Expr{Kind::access, 0.0, std::move(n), std::move(idx)};
  }
  static Expr binary(Kind k, Expr l, Expr r) {
    Expr e{k, 0.0, {}, {}};
    e.args.push_back(std::move(l));
    e.args.push_back(std::move(r));
    return e;
  }
  static Expr negate(Expr x) {
    Expr e{Kind::neg, 0.0, {}, {}};
    e.args.push_back(std::move(x));
    return e;
  }

  bool is_literal() const { return kind == Kind::literal; }
  bool is_literal(double v) const { return kind == Kind::literal && value == v; }
  bool is_binary() const {
    return kind == Kind::add || kind == Kind::sub || kind == Kind::mul || kind == Kind::div;
  }

  bool operator==(const Expr&) const = default;
};

struct Statement {
  Expr target;  // ident or access
  Expr value;
  bool operator==(const Statement&) const = default;
};

inline constexpr std::array<std::string_view, 6> kCallWhitelist = {"exp", "pow", "sin",
                                                                   "cos", "sqrt", "fabs"};

inline bool is_whitelisted_call(std::string_view f) {
  for (auto w : kCallWhitelist)
    if (w == f) return true;
  return false;
}

// ---------------------------------------------------------------------------
// Lexer / parser

namespace detail {

struct Token {
  enum class Type { number, ident, placeholder, op, end };
  Type type = Type::end;
  std::string text;
  double number = 0.0;
  std::size_t pos = 0;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < src_.size()) {
      char ch = src_[i];
      if (std::isspace(static_cast<unsigned char>(ch))) {
        ++i;
        continue;
      }
      Token t;
      t.pos = i;
      if (std::isdigit(static_cast<unsigned char>(ch)) ||
          (ch == '.' && i + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i + 1])))) {
        std::size_t j = i;
        while (j < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[j])) || src_[j] == '.')) ++j;
        if (j < src_.size() && (src_[j] == 'e' || src_[j] == 'E')) {
          std::size_t k = j + 1;
          if (k < src_.size() && (src_[k] == '+' || src_[k] == '-')) ++k;
          if (k < src_.size() && std::isdigit(static_cast<unsigned char>(src_[k]))) {
            j = k;
            while (j < src_.size() && std::isdigit(static_cast<unsigned char>(src_[j]))) ++j;
          }
        }
        t.type = Token::Type::number;
        t.text = std::string(src_.substr(i, j - i));
        auto [p, ec] = std::from_chars(src_.data() + i, src_.data() + j, t.number);
        if (ec != std::errc() || p != src_.data() + j)
          throw ParseError("malformed number '" + t.text + "' at offset " + std::to_string(i));
        i = j;
      } else if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_' || ch == '%') {
        std::size_t j = i + 1;
        while (j < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[j])) || src_[j] == '_')) ++j;
        t.type = ch == '%' ? Token::Type::placeholder : Token::Type::ident;
        t.text = std::string(src_.substr(i, j - i));
        if (t.type == Token::Type::placeholder && t.text.size() == 1)
          throw ParseError("stray '%' at offset " + std::to_string(i));
        i = j;
      } else {
        static constexpr std::string_view two[] = {"+=", "-=", "*=", "/="};
        t.type = Token::Type::op;
        bool matched = false;
        for (auto op : two) {
          if (src_.substr(i, 2) == op) {
            t.text = std::string(op);
            i += 2;
            matched = true;
            break;
          }
        }
        if (!matched) {
          if (std::string_view("+-*/()[],=;").find(ch) == std::string_view::npos)
            throw ParseError(std::string("unexpected character '") + ch + "' at offset " +
                             std::to_string(i));
          t.text = std::string(1, ch);
          ++i;
        }
      }
      out.push_back(std::move(t));
    }
    Token end;
    end.pos = src_.size();
    out.push_back(end);
    return out;
  }

 private:
  std::string_view src_;
};

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src), toks_(Lexer(src).run()) {}

  Expr parse_expr_only() {
    Expr e = expr();
    expect_end();
    return e;
  }

  Statement parse_statement() {
    Statement st;
    st.target = primary();
    if (st.target.kind != Expr::Kind::ident && st.target.kind != Expr::Kind::access)
      fail("assignment target must be a variable or array element");
    const Token& op = peek();
    if (op.type != Token::Type::op ||
        (op.text != "=" && op.text != "+=" && op.text != "-=" && op.text != "*=" && op.text != "/="))
      fail("expected assignment operator");
    std::string o = op.text;
    ++at_;
    Expr rhs = expr();
    if (peek().type == Token::Type::op && peek().text == ";") ++at_;
    expect_end();
    if (o == "=") {
      st.value = std::move(rhs);
    } else {
      Expr::Kind k = o == "+=" ? Expr::Kind::add
                     : o == "-=" ? Expr::Kind::sub
                     : o == "*=" ? Expr::Kind::mul
                                 : Expr::Kind::div;
      st.value = Expr::binary(k, st.target, std::move(rhs));
    }
    return st;
  }

 private:
  const Token& peek() const { return toks_[at_]; }
  bool accept(std::string_view op) {
    if (peek().type == Token::Type::op && peek().text == op) {
      ++at_;
      return true;
    }
    return false;
  }
  void expect(std::string_view op) {
    if (!accept(op)) fail("expected '" + std::string(op) + "'");
  }
  void expect_end() {
    if (peek().type != Token::Type::end) fail("unexpected trailing input");
  }
  [[noreturn]] void fail(const std::string& msg) const {
    const Token& t = peek();
    std::string near = t.type == Token::Type::end ? "end of input" : "'" + t.text + "'";
    throw ParseError(msg + " near " + near + " in \"" + std::string(src_) + "\"");
  }

  Expr expr() {
    Expr lhs = term();
    while (true) {
      if (accept("+")) {
        lhs = Expr::binary(Expr::Kind::add, std::move(lhs), term());
      } else if (accept("-")) {
        lhs = Expr::binary(Expr::Kind::sub, std::move(lhs), term());
      } else {
        return lhs;
      }
    }
  }

  Expr term() {
    Expr lhs = unary();
    while (true) {
      if (accept("*")) {
        lhs = Expr::binary(Expr::Kind::mul, std::move(lhs), unary());
      } else if (accept("/")) {
        lhs = Expr::binary(Expr::Kind::div, std::move(lhs), unary());
      } else {
        return lhs;
      }
    }
  }

  Expr unary() {
    if (accept("-")) {
      Expr x = unary();
      if (x.is_literal() && !std::signbit(x.value)) return Expr::lit(-x.value);
      return Expr::negate(std::move(x));
    }
    if (accept("+")) return unary();
    return primary();
  }

  std::vector<Expr> indices() {
    std::vector<Expr> idx;
    while (accept("[")) {
      idx.push_back(expr());
      expect("]");
    }
    return idx;
  }

  Expr primary() {
    const Token t = peek();
    switch (t.type) {
      case Token::Type::number:
        ++at_;
        return Expr::lit(t.number);
      case Token::Type::ident: {
        ++at_;
        if (accept("(")) {
          if (!is_whitelisted_call(t.text)) fail("call to non-whitelisted function '" + t.text + "'");
          Expr call{Expr::Kind::call, 0.0, t.text, {}};
          if (!accept(")")) {
            do {
              call.args.push_back(expr());
            } while (accept(","));
            expect(")");
          }
          std::size_t want = t.text == "pow" ? 2 : 1;
          if (call.args.size() != want)
            fail("function '" + t.text + "' takes " + std::to_string(want) + " argument(s)");
          return call;
        }
        auto idx = indices();
        if (idx.empty()) return Expr::id(t.text);
        return Expr::access(t.text, std::move(idx));
      }
      case Token::Type::placeholder: {
        ++at_;
        if (t.text == "%in") {
          auto idx = indices();
          if (idx.size() != 1) fail("%in takes exactly one index");
          return Expr{Expr::Kind::input, 0.0, {}, std::move(idx)};
        }
        if (t.text == "%RHS") {
          Expr r{Expr::Kind::rhs, 0.0, {}, {}};
          if (accept("(")) {
            if (peek().type != Token::Type::ident) fail("%RHS input must name an array");
            r.name = peek().text;
            ++at_;
            r.args = indices();
            expect(")");
          }
          return r;
        }
        fail("unknown placeholder '" + t.text + "'");
      }
      case Token::Type::op:
        if (accept("(")) {
          Expr e = expr();
          expect(")");
          return e;
        }
        fail("unexpected operator");
      case Token::Type::end:
        fail("unexpected end of input");
    }
    fail("unreachable");
  }

  std::string_view src_;
  std::vector<Token> toks_;
  std::size_t at_ = 0;
};

}  // namespace detail

inline Expr parse_expr(std::string_view text) { return detail::Parser(text).parse_expr_only(); }
inline Statement parse_statement(std::string_view text) {
  return detail::Parser(text).parse_statement();
}

// ---------------------------------------------------------------------------
// Printing

// Shortest decimal text that round-trips to the same double; always carries a
// '.' or exponent so C compilers read it as a double.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  std::string s(buf.data(), p);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

namespace detail {

inline int precedence(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::add:
    case Expr::Kind::sub: return 1;
    case Expr::Kind::mul:
    case Expr::Kind::div: return 2;
    case Expr::Kind::neg: return 3;
    case Expr::Kind::literal: return e.value < 0 || std::signbit(e.value) ? 3 : 4;
    default: return 4;
  }
}

inline void print(const Expr& e, std::string& out, bool int_ctx);

inline void print_child(const Expr& e, std::string& out, bool paren, bool int_ctx) {
  if (paren) out += '(';
  print(e, out, int_ctx);
  if (paren) out += ')';
}

inline void print_literal(double v, std::string& out, bool int_ctx) {
  if (int_ctx && std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 1e15) {
    out += std::to_string(static_cast<long long>(v));
  } else {
    out += format_double(v);
  }
}

inline void print(const Expr& e, std::string& out, bool int_ctx) {
  switch (e.kind) {
    case Expr::Kind::literal: print_literal(e.value, out, int_ctx); return;
    case Expr::Kind::ident: out += e.name; return;
    case Expr::Kind::access:
      out += e.name;
      for (const auto& i : e.args) {
        out += '[';
        print(i, out, true);
        out += ']';
      }
      return;
    case Expr::Kind::input:
      out += "%in[";
      print(e.args[0], out, true);
      out += ']';
      return;
    case Expr::Kind::rhs:
      out += "%RHS";
      if (!e.name.empty()) {
        out += '(' + e.name;
        for (const auto& i : e.args) {
          out += '[';
          print(i, out, true);
          out += ']';
        }
        out += ')';
      }
      return;
    case Expr::Kind::call:
      out += e.name + '(';
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i) out += ", ";
        print(e.args[i], out, false);
      }
      out += ')';
      return;
    case Expr::Kind::neg: {
      const Expr& x = e.args[0];
      out += '-';
      print_child(x, out, precedence(x) <= 3, int_ctx);
      return;
    }
    default: {
      int p = precedence(e);
      const char* op = e.kind == Expr::Kind::add   ? " + "
                       : e.kind == Expr::Kind::sub ? " - "
                       : e.kind == Expr::Kind::mul ? " * "
                                                   : " / ";
      print_child(e.args[0], out, precedence(e.args[0]) < p, int_ctx);
      out += op;
      // Right operands at equal precedence need parentheses to keep the tree
      // shape under left-associative re-parsing. Negative literals stay bare.
      const Expr& r = e.args[1];
      bool paren = r.kind == Expr::Kind::literal ? false : precedence(r) <= p;
      print_child(r, out, paren, int_ctx);
      return;
    }
  }
}

}  // namespace detail

inline std::string to_string(const Expr& e, bool integer_context = false) {
  std::string out;
  detail::print(e, out, integer_context);
  return out;
}

// Prints "x += e" when the statement has the form "x = x + e".
inline std::string to_string(const Statement& st) {
  std::string out = to_string(st.target, true);
  if (st.value.kind == Expr::Kind::add && st.value.args[0] == st.target) {
    out += " += ";
    out += to_string(st.value.args[1]);
  } else {
    out += " = ";
    out += to_string(st.value);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tree utilities

// Rebuilds `e` bottom-up; `f` sees each node after its children were
// rewritten and returns the replacement.
template <class F>
Expr transform(const Expr& e, F&& f) {
  Expr copy = e;
  for (auto& a : copy.args) a = transform(a, f);
  return f(std::move(copy));
}

template <class F>
void visit(const Expr& e, F&& f) {
  f(e);
  for (const auto& a : e.args) visit(a, f);
}

inline bool contains_kind(const Expr& e, Expr::Kind k) {
  bool found = false;
  visit(e, [&](const Expr& x) { found = found || x.kind == k; });
  return found;
}

inline bool mentions(const Expr& e, std::string_view ident) {
  bool found = false;
  visit(e, [&](const Expr& x) {
    if (x.kind == Expr::Kind::ident && x.name == ident) found = true;
  });
  return found;
}

inline Expr substitute_ident(const Expr& e, std::string_view ident, const Expr& with) {
  return transform(e, [&](Expr x) {
    if (x.kind == Expr::Kind::ident && x.name == ident) return with;
    return x;
  });
}

inline double apply_call(std::string_view fn, const std::vector<double>& a) {
  if (fn == "exp") return std::exp(a[0]);
  if (fn == "pow") return std::pow(a[0], a[1]);
  if (fn == "sin") return std::sin(a[0]);
  if (fn == "cos") return std::cos(a[0]);
  if (fn == "sqrt") return std::sqrt(a[0]);
  return std::fabs(a[0]);
}

// Evaluates an expression whose identifiers are resolved by `lookup`; returns
// nullopt if any identifier is unresolved or the tree contains arrays or
// placeholders.
inline std::optional<double> try_eval(const Expr& e,
                                      const std::function<std::optional<double>(std::string_view)>& lookup) {
  switch (e.kind) {
    case Expr::Kind::literal: return e.value;
    case Expr::Kind::ident: return lookup ? lookup(e.name) : std::nullopt;
    case Expr::Kind::neg: {
      auto x = try_eval(e.args[0], lookup);
      if (!x) return std::nullopt;
      return -*x;
    }
    case Expr::Kind::add:
    case Expr::Kind::sub:
    case Expr::Kind::mul:
    case Expr::Kind::div: {
      auto l = try_eval(e.args[0], lookup);
      auto r = try_eval(e.args[1], lookup);
      if (!l || !r) return std::nullopt;
      switch (e.kind) {
        case Expr::Kind::add: return *l + *r;
        case Expr::Kind::sub: return *l - *r;
        case Expr::Kind::mul: return *l * *r;
        default: return *l / *r;
      }
    }
    case Expr::Kind::call: {
      std::vector<double> a;
      for (const auto& x : e.args) {
        auto v = try_eval(x, lookup);
        if (!v) return std::nullopt;
        a.push_back(*v);
      }
      return apply_call(e.name, a);
    }
    default: return std::nullopt;
  }
}

// Evaluates with a fixed set of named values; throws ParseError on unknown
// identifiers or non-finite results.
inline double eval_constant(const Expr& e, const std::vector<std::pair<std::string, double>>& bindings = {}) {
  std::string missing;
  auto v = try_eval(e, [&](std::string_view n) -> std::optional<double> {
    for (const auto& [k, val] : bindings)
      if (k == n) return val;
    if (missing.empty()) missing = std::string(n);
    return std::nullopt;
  });
  if (!v) {
    throw ParseError(missing.empty() ? "expression '" + to_string(e) + "' is not a constant"
                                     : "unknown identifier '" + missing + "' in '" + to_string(e) + "'");
  }
  if (!std::isfinite(*v)) throw ParseError("expression '" + to_string(e) + "' is not finite");
  return *v;
}

// Constant folding plus optional algebraic identities with exact 0.0 / 1.0
// literals (x*0 -> 0, x+0 -> x, x*1 -> x, x/1 -> x, x-0 -> x, 0-x -> -x).
inline Expr simplify(const Expr& e, bool eliminate_zeros = true) {
  return transform(e, [eliminate_zeros](Expr x) -> Expr {
    if (x.kind == Expr::Kind::neg && x.args[0].is_literal()) return Expr::lit(-x.args[0].value);
    if (x.kind == Expr::Kind::neg && x.args[0].kind == Expr::Kind::neg) return x.args[0].args[0];
    if (x.is_binary() && x.args[0].is_literal() && x.args[1].is_literal()) {
      auto v = try_eval(x, nullptr);
      if (v && std::isfinite(*v)) return Expr::lit(*v);
      return x;
    }
    if (x.kind == Expr::Kind::call) {
      bool all_lit = true;
      for (const auto& a : x.args) all_lit = all_lit && a.is_literal();
      if (all_lit) {
        auto v = try_eval(x, nullptr);
        if (v && std::isfinite(*v)) return Expr::lit(*v);
      }
      return x;
    }
    if (!eliminate_zeros || !x.is_binary()) return x;
    const Expr& l = x.args[0];
    const Expr& r = x.args[1];
    switch (x.kind) {
      case Expr::Kind::mul:
        if (l.is_literal(0.0) || r.is_literal(0.0)) return Expr::lit(0.0);
        if (l.is_literal(1.0)) return r;
        if (r.is_literal(1.0)) return l;
        return x;
      case Expr::Kind::add:
        if (l.is_literal(0.0)) return r;
        if (r.is_literal(0.0)) return l;
        return x;
      case Expr::Kind::sub:
        if (r.is_literal(0.0)) return l;
        if (l.is_literal(0.0)) return Expr::negate(r);
        return x;
      case Expr::Kind::div:
        if (r.is_literal(1.0)) return l;
        if (l.is_literal(0.0) && !r.is_literal(0.0)) return Expr::lit(0.0);
        return x;
      default: return x;
    }
  });
}

// ---------------------------------------------------------------------------
// Univariate polynomials, used for symbolic checks over the system size n.

struct Poly {
  std::vector<double> c;  // ascending powers

  static Poly constant(double v) { return Poly{{v}}; }
  static Poly variable() { return Poly{{0.0, 1.0}}; }

  Poly& trim() {
    while (c.size() > 1 && c.back() == 0.0) c.pop_back();
    if (c.empty()) c.push_back(0.0);
    return *this;
  }
  std::size_t degree() const { return c.size() - 1; }
  double operator()(double x) const {
    double r = 0.0;
    for (std::size_t i = c.size(); i-- > 0;) r = r * x + c[i];
    return r;
  }
  friend Poly operator+(Poly a, const Poly& b) {
    if (a.c.size() < b.c.size()) a.c.resize(b.c.size(), 0.0);
    for (std::size_t i = 0; i < b.c.size(); ++i) a.c[i] += b.c[i];
    return a.trim();
  }
  friend Poly operator-(const Poly& a) {
    Poly r = a;
    for (auto& v : r.c) v = -v;
    return r;
  }
  friend Poly operator-(const Poly& a, const Poly& b) { return a + (-b); }
  friend Poly operator*(const Poly& a, const Poly& b) {
    Poly r;
    r.c.assign(a.c.size() + b.c.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.c.size(); ++i)
      for (std::size_t j = 0; j < b.c.size(); ++j) r.c[i + j] += a.c[i] * b.c[j];
    return r.trim();
  }
  bool operator==(const Poly& o) const {
    Poly a = *this, b = o;
    a.trim();
    b.trim();
    return a.c == b.c;
  }
};

// Converts an expression to a polynomial in `var`, binding other identifiers
// through `bindings`. Returns nullopt for non-polynomial forms.
inline std::optional<Poly> to_poly(const Expr& e, std::string_view var,
                                   const std::vector<std::pair<std::string, double>>& bindings = {}) {
  switch (e.kind) {
    case Expr::Kind::literal: return Poly::constant(e.value);
    case Expr::Kind::ident:
      if (e.name == var) return Poly::variable();
      for (const auto& [k, v] : bindings)
        if (k == e.name) return Poly::constant(v);
      return std::nullopt;
    case Expr::Kind::neg: {
      auto x = to_poly(e.args[0], var, bindings);
      if (!x) return std::nullopt;
      return -*x;
    }
    case Expr::Kind::add:
    case Expr::Kind::sub:
    case Expr::Kind::mul: {
      auto l = to_poly(e.args[0], var, bindings);
      auto r = to_poly(e.args[1], var, bindings);
      if (!l || !r) return std::nullopt;
      if (e.kind == Expr::Kind::add) return *l + *r;
      if (e.kind == Expr::Kind::sub) return *l - *r;
      return *l * *r;
    }
    case Expr::Kind::div: {
      auto l = to_poly(e.args[0], var, bindings);
      auto r = to_poly(e.args[1], var, bindings);
      if (!l || !r || r->degree() != 0 || r->c[0] == 0.0) return std::nullopt;
      Poly q = *l;
      for (auto& v : q.c) v /= r->c[0];
      return q;
    }
    default: return std::nullopt;
  }
}

}  // namespace pirktune
