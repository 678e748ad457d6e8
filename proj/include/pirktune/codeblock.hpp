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

#include <algorithm>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pirktune/error.hpp"
#include "pirktune/expr.hpp"

namespace pirktune {

// Where a code block lives decides which keywords are legal in it.
enum class BlockContext { kernel, skeleton };

struct CodeNode {
  enum class Kind { loop, comp, pragma, comm, kernel };

  Kind kind = Kind::comp;
  std::string var;     // loop variable
  Expr trips;          // loop trip count
  bool unroll = false;
  std::string ref;     // computation id, pragma text, communication op, template name
  std::vector<CodeNode> body;

  bool operator==(const CodeNode&) const = default;
};

using CodeBlock = std::vector<CodeNode>;

namespace detail {

inline std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

inline std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool is_identifier(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

}  // namespace detail

// Parses the four-keyword block language. Kernel blocks accept %LOOP_START,
// %LOOP_END, %COMP and %PRAGMA; skeleton blocks accept %LOOP_START,
// %LOOP_END, %COM and %KERNEL. Trip counts may reference s and n (plus m in
// skeletons) and the variables of enclosing loops.
inline CodeBlock parse_code_block(std::string_view text, BlockContext ctx) {
  CodeBlock root;
  std::vector<CodeNode> stack;  // open loops, innermost last
  auto current = [&]() -> CodeBlock& { return stack.empty() ? root : stack.back().body; };
  const bool kernel = ctx == BlockContext::kernel;

  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = detail::trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++lineno;
    if (line.empty()) continue;
    const std::string where = " (line " + std::to_string(lineno) + ")";

    auto toks = detail::split_ws(line);
    const std::string& kw = toks[0];
    auto illegal = [&] {
      throw ParseError("keyword " + kw + " is not allowed in a " +
                       (kernel ? "kernel" : "skeleton") + " block" + where);
    };

    if (kw == "%LOOP_START") {
      if (toks.size() < 3) throw ParseError("%LOOP_START needs a variable and a trip count" + where);
      CodeNode loop;
      loop.kind = CodeNode::Kind::loop;
      loop.var = toks[1];
      if (!detail::is_identifier(loop.var)) throw ParseError("bad loop variable '" + loop.var + "'" + where);
      std::size_t last = toks.size();
      if (toks.back() == "unroll") {
        loop.unroll = true;
        --last;
      }
      if (last < 3) throw ParseError("%LOOP_START needs a trip count" + where);
      std::string trips;
      for (std::size_t i = 2; i < last; ++i) trips += toks[i];
      loop.trips = parse_expr(trips);
      for (const auto& open : stack) {
        if (open.var == loop.var)
          throw ParseError("loop variable '" + loop.var + "' shadows an enclosing loop" + where);
      }
      std::string unknown;
      visit(loop.trips, [&](const Expr& e) {
        if (e.kind == Expr::Kind::ident) {
          bool ok = e.name == "s" || e.name == "n" || (!kernel && e.name == "m");
          for (const auto& open : stack) ok = ok || open.var == e.name;
          if (!ok && unknown.empty()) unknown = e.name;
        } else if (e.kind != Expr::Kind::literal && !e.is_binary() && e.kind != Expr::Kind::neg) {
          if (unknown.empty()) unknown = to_string(e);
        }
      });
      if (!unknown.empty())
        throw ParseError("unknown parameter '" + unknown + "' in loop trip count" + where);
      stack.push_back(std::move(loop));
    } else if (kw == "%LOOP_END") {
      if (stack.empty()) throw ParseError("unmatched %LOOP_END" + where);
      if (toks.size() > 2) throw ParseError("%LOOP_END takes at most one parameter" + where);
      if (toks.size() == 2 && toks[1] != stack.back().var)
        throw ParseError("%LOOP_END " + toks[1] + " closes loop '" + stack.back().var + "'" + where);
      CodeNode done = std::move(stack.back());
      stack.pop_back();
      current().push_back(std::move(done));
    } else if (kw == "%COMP" || kw == "%KERNEL" || kw == "%COM") {
      if ((kw == "%COMP") != kernel) illegal();
      if (toks.size() != 2) throw ParseError(kw + " takes exactly one parameter" + where);
      CodeNode n;
      n.kind = kw == "%COMP" ? CodeNode::Kind::comp
               : kw == "%KERNEL" ? CodeNode::Kind::kernel
                                 : CodeNode::Kind::comm;
      n.ref = toks[1];
      current().push_back(std::move(n));
    } else if (kw == "%PRAGMA") {
      if (!kernel) illegal();
      CodeNode n;
      n.kind = CodeNode::Kind::pragma;
      n.ref = std::string(detail::trim(line.substr(kw.size())));
      if (n.ref.empty()) throw ParseError("%PRAGMA without text" + where);
      current().push_back(std::move(n));
    } else {
      throw ParseError("unknown keyword '" + kw + "'" + where);
    }
  }
  if (!stack.empty()) throw ParseError("%LOOP_START " + stack.back().var + " has no matching %LOOP_END");
  return root;
}

namespace detail {

inline void print_block(const CodeBlock& block, std::string& out, int depth) {
  const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
  for (const auto& n : block) {
    switch (n.kind) {
      case CodeNode::Kind::loop:
        out += pad + "%LOOP_START " + n.var + " " + to_string(n.trips, true) + (n.unroll ? " unroll" : "") + "\n";
        print_block(n.body, out, depth + 1);
        out += pad + "%LOOP_END " + n.var + "\n";
        break;
      case CodeNode::Kind::comp: out += pad + "%COMP " + n.ref + "\n"; break;
      case CodeNode::Kind::pragma: out += pad + "%PRAGMA " + n.ref + "\n"; break;
      case CodeNode::Kind::comm: out += pad + "%COM " + n.ref + "\n"; break;
      case CodeNode::Kind::kernel: out += pad + "%KERNEL " + n.ref + "\n"; break;
    }
  }
}

}  // namespace detail

// Inverse of parse_code_block (up to whitespace).
inline std::string to_string(const CodeBlock& block) {
  std::string out;
  detail::print_block(block, out, 0);
  return out;
}

template <class F>
void walk(const CodeBlock& block, F&& f) {
  for (const auto& n : block) {
    f(n);
    if (n.kind == CodeNode::Kind::loop) walk(n.body, f);
  }
}

}  // namespace pirktune
