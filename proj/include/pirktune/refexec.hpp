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

// Sequential reference interpreter for specialized kernels and variants, and
// a direct transcription of the PIRK timestep used as a test oracle.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pirktune/codegen.hpp"
#include "pirktune/descfmt.hpp"
#include "pirktune/error.hpp"
#include "pirktune/expr.hpp"

namespace pirktune {

struct Array {
  std::vector<std::int64_t> dims;
  std::vector<double> data;

  Array() = default;
  explicit Array(std::vector<std::int64_t> d, double fill = 0.0) : dims(std::move(d)) {
    std::int64_t total = 1;
    for (auto x : dims) total *= x;
    data.assign(static_cast<std::size_t>(total), fill);
  }
  std::size_t size() const { return data.size(); }
  bool operator==(const Array&) const = default;
};

// Named scalars and arrays. std::map keeps element addresses stable, which
// the compiled form relies on.
class Env {
 public:
  double& scalar(const std::string& name) { return scalars_[name]; }
  const double* find_scalar(const std::string& name) const {
    auto it = scalars_.find(name);
    return it == scalars_.end() ? nullptr : &it->second;
  }
  Array& define(const std::string& name, std::vector<std::int64_t> dims, double fill = 0.0) {
    return arrays_[name] = Array(std::move(dims), fill);
  }
  Array& array(const std::string& name) {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) throw ExecError(ExecError::Kind::unbound, "unbound array '" + name + "'");
    return it->second;
  }
  const Array& array(const std::string& name) const { return const_cast<Env*>(this)->array(name); }
  bool has_array(const std::string& name) const { return arrays_.count(name) != 0; }
  bool operator==(const Env&) const = default;

 private:
  std::map<std::string, double> scalars_;
  std::map<std::string, Array> arrays_;
};

namespace detail {

// Expression tree with identifiers resolved to storage.
struct RNode {
  Expr::Kind kind = Expr::Kind::literal;
  double value = 0.0;
  double* slot = nullptr;
  Array* arr = nullptr;
  std::string name;
  std::vector<RNode> args;
};

struct Resolver {
  Env& env;
  Array* input = nullptr;  // binding for %in

  RNode resolve(const Expr& e) {
    RNode r;
    r.kind = e.kind;
    r.value = e.value;
    r.name = e.name;
    switch (e.kind) {
      case Expr::Kind::ident: {
        const double* p = env.find_scalar(e.name);
        if (!p) throw ExecError(ExecError::Kind::unbound, "unbound identifier '" + e.name + "'");
        r.slot = const_cast<double*>(p);
        break;
      }
      case Expr::Kind::access: r.arr = &env.array(e.name); break;
      case Expr::Kind::input:
        if (!input) throw ExecError(ExecError::Kind::unbound, "%in used outside IVP evaluation");
        r.arr = input;
        break;
      case Expr::Kind::rhs:
        throw ExecError(ExecError::Kind::type, "unsubstituted %RHS placeholder");
      default: break;
    }
    for (const auto& a : e.args) r.args.push_back(resolve(a));
    if (r.arr && r.args.size() != r.arr->dims.size())
      throw ExecError(ExecError::Kind::type, "array '" + e.name + "' indexed with " + std::to_string(r.args.size()) +
                                                 " subscripts, declared with " + std::to_string(r.arr->dims.size()));
    return r;
  }
};

inline double eval(const RNode& n);

inline std::size_t offset(const RNode& n) {
  std::size_t off = 0;
  for (std::size_t d = 0; d < n.args.size(); ++d) {
    double v = eval(n.args[d]);
    auto i = static_cast<std::int64_t>(v);
    if (double(i) != v) throw ExecError(ExecError::Kind::type, "non-integral index into '" + n.name + "'");
    if (i < 0 || i >= n.arr->dims[d])
      throw ExecError(ExecError::Kind::bounds, "index " + std::to_string(i) + " out of bounds for dimension " +
                                                   std::to_string(d) + " of '" + n.name + "' (extent " +
                                                   std::to_string(n.arr->dims[d]) + ")");
    off = off * static_cast<std::size_t>(n.arr->dims[d]) + static_cast<std::size_t>(i);
  }
  return off;
}

inline double eval(const RNode& n) {
  switch (n.kind) {
    case Expr::Kind::literal: return n.value;
    case Expr::Kind::ident: return *n.slot;
    case Expr::Kind::access:
    case Expr::Kind::input: return n.arr->data[offset(n)];
    case Expr::Kind::neg: return -eval(n.args[0]);
    case Expr::Kind::add: return eval(n.args[0]) + eval(n.args[1]);
    case Expr::Kind::sub: return eval(n.args[0]) - eval(n.args[1]);
    case Expr::Kind::mul: return eval(n.args[0]) * eval(n.args[1]);
    case Expr::Kind::div: return eval(n.args[0]) / eval(n.args[1]);
    case Expr::Kind::call: {
      std::vector<double> a;
      a.reserve(n.args.size());
      for (const auto& x : n.args) a.push_back(eval(x));
      double v = apply_call(n.name, a);
      if (!std::isfinite(v)) throw ExecError(ExecError::Kind::domain, "domain error in " + n.name + "()");
      return v;
    }
    case Expr::Kind::rhs: break;
  }
  throw ExecError(ExecError::Kind::type, "unsubstituted placeholder");
}

struct RStatement {
  RNode target;
  RNode value;
  std::string text;

  void run() const {
    double v = eval(value);
    if (!std::isfinite(v)) throw ExecError(ExecError::Kind::domain, "non-finite result in '" + text + "'");
    if (target.kind == Expr::Kind::ident) {
      *target.slot = v;
    } else {
      target.arr->data[offset(target)] = v;
    }
  }
};

inline RStatement resolve_statement(const Statement& st, Resolver& r) {
  if (st.target.kind != Expr::Kind::access && st.target.kind != Expr::Kind::ident)
    throw ExecError(ExecError::Kind::type, "assignment target must be a variable or array element");
  return RStatement{r.resolve(st.target), r.resolve(st.value), to_string(st)};
}

struct RBlockNode {
  bool is_loop = false;
  double* var = nullptr;
  RNode begin, end;
  RStatement stmt;
  std::vector<RBlockNode> body;
};

inline std::vector<RBlockNode> resolve_block(const std::vector<KernelNode>& block, Resolver& r) {
  std::vector<RBlockNode> out;
  for (const auto& k : block) {
    if (k.kind == KernelNode::Kind::pragma) continue;
    RBlockNode n;
    if (k.kind == KernelNode::Kind::stmt) {
      n.stmt = resolve_statement(k.stmt, r);
    } else {
      n.is_loop = true;
      n.begin = r.resolve(k.begin);
      n.end = r.resolve(k.end);
      n.var = &r.env.scalar(k.var);
      n.body = resolve_block(k.body, r);
    }
    out.push_back(std::move(n));
  }
  return out;
}

inline void run_block(const std::vector<RBlockNode>& block) {
  for (const auto& n : block) {
    if (!n.is_loop) {
      n.stmt.run();
      continue;
    }
    const auto b = static_cast<std::int64_t>(eval(n.begin));
    const auto e = static_cast<std::int64_t>(eval(n.end));
    for (std::int64_t v = b; v < e; ++v) {
      *n.var = double(v);
      run_block(n.body);
    }
  }
}

}  // namespace detail

// Evaluates an expression against `env`.
inline double eval_expr(const Expr& e, Env& env) {
  detail::Resolver r{env};
  return detail::eval(r.resolve(e));
}

// Executes one assignment; only the target cell changes.
inline void eval_statement(const Statement& st, Env& env) {
  detail::Resolver r{env};
  detail::resolve_statement(st, r).run();
}

// A specialized kernel body bound to an environment, ready to run repeatedly.
class CompiledKernel {
 public:
  CompiledKernel(const std::vector<KernelNode>& body, Env& env) {
    detail::Resolver r{env};
    code_ = detail::resolve_block(body, r);
  }
  void run() const { detail::run_block(code_); }

 private:
  std::vector<detail::RBlockNode> code_;
};

inline void exec_kernel(const GeneratedKernel& g, Env& env) { CompiledKernel(g.body, env).run(); }

// Evaluates the IVP right-hand side f(y) component block by component block.
class RhsEvaluator {
 public:
  RhsEvaluator(const IVP& ivp, std::int64_t n) : n_(n) {
    if (n < ivp.n_min)
      throw ExecError(ExecError::Kind::bounds, "n=" + std::to_string(n) + " below the smallest size of " + ivp.name);
    input_ = &env_.define("%in", {n});
    j_ = &env_.scalar("j");
    for (const auto& c : ivp.constants) env_.scalar(c.name) = c.value;
    detail::Resolver r{env_, input_};
    for (const auto& c : ivp.components) blocks_.push_back({c.begin(n), c.count(n), r.resolve(c.code)});
  }

  void operator()(const double* in, double* out) const {
    std::copy(in, in + n_, input_->data.begin());
    for (const auto& b : blocks_) {
      for (std::int64_t j = b.begin; j < b.begin + b.count; ++j) {
        *j_ = double(j);
        double v = detail::eval(b.code);
        if (!std::isfinite(v)) throw ExecError(ExecError::Kind::domain, "non-finite right-hand side");
        out[j] = v;
      }
    }
  }

 private:
  struct Block {
    std::int64_t begin, count;
    detail::RNode code;
  };
  std::int64_t n_;
  Env env_;
  Array* input_ = nullptr;
  double* j_ = nullptr;
  std::vector<Block> blocks_;
};

// One PIRK timestep written directly from its definition: predictor
// Y_l = y, m corrector sweeps Y_l = y + h sum_i a_li f(Y_i), then
// y_next = y + h sum_i b_i f(Y_i). The IVPs are autonomous; t is unused.
inline std::vector<double> pirk_reference_step(const ODEMethod& method, const IVP& ivp, const std::vector<double>& y,
                                               double t, double h) {
  (void)t;
  const auto n = static_cast<std::int64_t>(y.size());
  const auto s = static_cast<std::size_t>(method.stages);
  RhsEvaluator f(ivp, n);
  std::vector<std::vector<double>> Y(s, y), F(s, std::vector<double>(y.size()));
  for (int k = 0; k < method.corrector_steps; ++k) {
    for (std::size_t i = 0; i < s; ++i) f(Y[i].data(), F[i].data());
    for (std::size_t l = 0; l < s; ++l) {
      for (std::size_t j = 0; j < y.size(); ++j) {
        double sum = 0.0;
        for (std::size_t i = 0; i < s; ++i) sum += method.A[l][i] * F[i][j];
        Y[l][j] = y[j] + h * sum;
      }
    }
  }
  for (std::size_t i = 0; i < s; ++i) f(Y[i].data(), F[i].data());
  std::vector<double> next(y.size());
  for (std::size_t j = 0; j < y.size(); ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < s; ++i) sum += method.b[i] * F[i][j];
    next[j] = y[j] + h * sum;
  }
  return next;
}

// Binds the solver state of a fixed-n variant: y, Y, F, dy, h and the Butcher
// arrays for kernels that still index them.
inline Env make_solver_env(const ODEMethod& method, const std::vector<double>& y, double h) {
  const auto n = static_cast<std::int64_t>(y.size());
  const std::int64_t s = method.stages;
  Env env;
  env.define("y", {n}).data = y;
  Array& Y = env.define("Y", {s, n});
  for (std::int64_t l = 0; l < s; ++l) std::copy(y.begin(), y.end(), Y.data.begin() + l * n);
  env.define("F", {s, n});
  env.define("dy", {n});
  env.scalar("h") = h;
  env.define("A", {s, s}).data = flatten_coefficients("A", method);
  env.define("a", {s, s}).data = flatten_coefficients("A", method);
  env.define("b", {s}).data = method.b;
  env.define("c", {s}).data = method.c;
  return env;
}

// Runs one timestep of a specialized variant sequentially. Barriers are
// no-ops. The predictor (Y_l = y, dy = 0) is set up before the skeleton runs.
inline std::vector<double> execute_variant(const VariantSpecialization& vs, const ODEMethod& method,
                                           const std::vector<double>& y, double t, double h) {
  (void)t;
  if (!vs.n || *vs.n != static_cast<std::int64_t>(y.size()))
    throw ExecError(ExecError::Kind::type, "variant " + vs.variant.id + " is not specialized for n=" +
                                               std::to_string(y.size()));
  Env env = make_solver_env(method, y, h);
  std::map<std::string, std::vector<CompiledKernel>> compiled;
  for (const auto& [tname, ks] : vs.kernels) {
    auto& list = compiled[tname];
    for_each_nest(ks, [&](const GeneratedKernel& g, std::size_t b, std::size_t e) {
      list.emplace_back(std::vector<KernelNode>(g.body.begin() + static_cast<std::ptrdiff_t>(b),
                                                g.body.begin() + static_cast<std::ptrdiff_t>(e)),
                        env);
    });
  }

  const std::vector<std::pair<std::string, double>> bind = {{"m", double(method.corrector_steps)},
                                                            {"s", double(method.stages)}};
  auto rec = [&](auto&& self, const CodeBlock& block) -> void {
    for (const auto& node : block) {
      if (node.kind == CodeNode::Kind::loop) {
        auto trips = static_cast<std::int64_t>(eval_constant(node.trips, bind));
        for (std::int64_t k = 0; k < trips; ++k) self(self, node.body);
      } else if (node.kind == CodeNode::Kind::kernel) {
        for (const auto& ck : compiled.at(node.ref)) ck.run();
      }
    }
  };
  rec(rec, vs.skeleton.code);
  return env.array("y").data;
}

}  // namespace pirktune
