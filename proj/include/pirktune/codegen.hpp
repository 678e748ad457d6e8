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

// Kernel specialization, variant enumeration and C code emission.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pirktune/codeblock.hpp"
#include "pirktune/descfmt.hpp"
#include "pirktune/error.hpp"
#include "pirktune/expr.hpp"

namespace pirktune {

// ---------------------------------------------------------------------------
// Implementation variants

struct KernelChoice {
  std::string templ;
  std::string kernel;
  bool operator==(const KernelChoice&) const = default;
};

struct ImplVariant {
  std::string id;
  std::string skeleton;
  std::vector<KernelChoice> kernel_choice;  // one per required template, skeleton order

  bool operator==(const ImplVariant&) const = default;

  const std::string& kernel_for(std::string_view templ) const {
    for (const auto& c : kernel_choice)
      if (c.templ == templ) return c.kernel;
    throw CodegenError("variant " + id + " has no kernel for template " + std::string(templ));
  }
};

// "APRX_ji" -> "APRXji"
inline std::string compact_kernel_name(std::string_view kernel) {
  std::string out;
  for (char ch : kernel)
    if (ch != '_') out += ch;
  return out;
}

inline const KernelTemplate& find_template(const std::vector<KernelTemplate>& ts, std::string_view name) {
  for (const auto& t : ts)
    if (t.name == name) return t;
  throw CodegenError("unknown kernel template '" + std::string(name) + "'");
}

// Cartesian product over the kernels of each skeleton's templates. Variants
// are ordered by skeleton name, then lexicographically by kernel names. The
// id lists the kernels of templates that offer a choice, e.g. A_LCjli_APRXji.
inline std::vector<ImplVariant> enumerate_variants(const std::vector<ImplSkeleton>& skeletons,
                                                   const std::vector<KernelTemplate>& templates) {
  std::vector<const ImplSkeleton*> order;
  for (const auto& s : skeletons) order.push_back(&s);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->name < b->name; });

  std::vector<ImplVariant> out;
  for (const ImplSkeleton* sk : order) {
    std::vector<std::vector<std::string>> options;
    for (const auto& t : sk->required_templates) {
      std::vector<std::string> names;
      for (const auto& v : find_template(templates, t).variants) names.push_back(v.name);
      std::sort(names.begin(), names.end());
      options.push_back(std::move(names));
    }
    std::vector<std::size_t> pick(options.size(), 0);
    while (true) {
      ImplVariant v;
      v.skeleton = sk->name;
      v.id = sk->name;
      for (std::size_t i = 0; i < options.size(); ++i) {
        v.kernel_choice.push_back({sk->required_templates[i], options[i][pick[i]]});
        if (options[i].size() > 1) v.id += "_" + compact_kernel_name(options[i][pick[i]]);
      }
      out.push_back(std::move(v));
      std::size_t d = options.size();
      while (d > 0) {
        --d;
        if (++pick[d] < options[d].size()) break;
        pick[d] = 0;
        if (d == 0) {
          d = options.size() + 1;
          break;
        }
      }
      if (d == options.size() + 1 || options.empty()) break;
    }
  }
  return out;
}

// Distinct kernels (template, kernel) referenced by a set of variants.
inline std::vector<KernelChoice> distinct_kernels(const std::vector<ImplVariant>& variants) {
  std::vector<KernelChoice> out;
  for (const auto& v : variants)
    for (const auto& c : v.kernel_choice)
      if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  return out;
}

// ---------------------------------------------------------------------------
// Specialized kernels

struct KernelNode {
  enum class Kind { loop, stmt, pragma };

  Kind kind = Kind::stmt;
  std::string var;
  Expr begin;          // loops iterate [begin, end)
  Expr end;
  Statement stmt;
  std::string text;    // pragma text or loop comment
  std::vector<KernelNode> body;

  bool operator==(const KernelNode&) const = default;
};

struct GeneratedKernel {
  std::string kernel;                   // kernel variant name, e.g. APRX_ji
  std::string templ;
  std::string method;
  std::string ivp;                      // empty for kernels without %RHS
  std::optional<std::size_t> component;
  std::optional<std::int64_t> n;        // nullopt: symbolic in n
  int stages = 0;
  std::vector<DataStruct> arrays;       // referenced data, template order
  std::vector<KernelNode> body;
  std::vector<std::size_t> nest_sizes;  // body nodes produced by each top-level source node
  Expr beta;                            // iterations of the innermost loop body
  std::vector<Expr> working_sets;
  std::map<std::string, Expr> footprints;  // elements per array, symbolic in n
  std::map<std::string, std::vector<double>> coefficients;  // Butcher arrays left as data

  bool operator==(const GeneratedKernel&) const = default;

  std::int64_t beta_at(std::int64_t n_value) const {
    return static_cast<std::int64_t>(eval_constant(beta, {{"n", double(n_value)}}));
  }
};

struct SpecializeOptions {
  bool eliminate_zeros = true;
};

// Statements in a specialized body, unrolled copies included.
inline std::size_t count_statements(const std::vector<KernelNode>& block) {
  std::size_t n = 0;
  for (const auto& k : block) {
    if (k.kind == KernelNode::Kind::stmt) ++n;
    if (k.kind == KernelNode::Kind::loop) n += count_statements(k.body);
  }
  return n;
}

inline bool is_coefficient_array(std::string_view name) {
  return name == "A" || name == "a" || name == "b" || name == "c";
}

inline std::vector<double> flatten_coefficients(std::string_view name, const ODEMethod& m) {
  if (name == "A" || name == "a") {
    std::vector<double> out;
    for (const auto& r : m.A) out.insert(out.end(), r.begin(), r.end());
    return out;
  }
  return name == "b" ? m.b : m.c;
}

namespace detail {

struct SpecializeContext {
  const KernelTemplate& tmpl;
  const KernelVariantDef& variant;
  const ODEMethod& method;
  const IVP* ivp;
  const IVPComponent* component;
  std::optional<std::int64_t> n;
  SpecializeOptions opts;
  std::vector<std::pair<std::string, Expr>> bound;  // unrolled loop vars -> literal
  std::vector<std::string> n_loops;                  // enclosing loops running over the system
  std::vector<std::string> notes;  // first-occurrence order

  void note(std::string s) {
    if (std::find(notes.begin(), notes.end(), s) == notes.end()) notes.push_back(std::move(s));
  }
};

inline Expr bind_parameters(const Expr& e, const SpecializeContext& cx) {
  return transform(e, [&](Expr x) -> Expr {
    if (x.kind != Expr::Kind::ident) return x;
    if (x.name == "s") return Expr::lit(cx.method.stages);
    if (x.name == "m") return Expr::lit(cx.method.corrector_steps);
    if (x.name == "n" && cx.n) return Expr::lit(double(*cx.n));
    for (auto it = cx.bound.rbegin(); it != cx.bound.rend(); ++it)
      if (it->first == x.name) return it->second;
    return x;
  });
}

inline Expr substitute_rhs(const Expr& rhs, SpecializeContext& cx) {
  if (!cx.component)
    throw CodegenError("kernel " + cx.variant.name + " contains %RHS but no IVP component was supplied");
  if (rhs.name.empty())
    throw CodegenError("kernel " + cx.variant.name + ": %RHS must name its input array, e.g. %RHS(Y[i])");
  if (cx.n_loops.empty())
    throw CodegenError("kernel " + cx.variant.name + ": %RHS outside a loop over the system size n");
  const std::string& jvar = cx.n_loops.back();
  Expr code = transform(cx.component->code, [&](Expr x) -> Expr {
    if (x.kind == Expr::Kind::input) {
      std::vector<Expr> idx = rhs.args;
      idx.push_back(x.args[0]);
      return Expr::access(rhs.name, std::move(idx));
    }
    if (x.kind == Expr::Kind::ident) {
      if (x.name == "j") return Expr::id(jvar);
      for (const auto& c : cx.ivp->constants)
        if (c.name == x.name) return Expr::lit(c.value);
    }
    return x;
  });
  return code;
}

inline std::optional<Statement> specialize_statement(const Statement& st, SpecializeContext& cx) {
  auto rewrite = [&](const Expr& e) {
    Expr x = transform(e, [&](Expr node) -> Expr {
      if (node.kind == Expr::Kind::rhs) return substitute_rhs(node, cx);
      return node;
    });
    x = bind_parameters(x, cx);
    x = simplify(x, false);
    x = transform(x, [&](Expr node) -> Expr {
      if (node.kind != Expr::Kind::access || !is_coefficient_array(node.name)) return node;
      if (!cx.tmpl.datastruct(node.name)) return node;
      std::vector<std::int64_t> idx;
      for (const auto& i : node.args) {
        if (!i.is_literal()) return node;
        idx.push_back(static_cast<std::int64_t>(i.value));
      }
      const std::size_t s = static_cast<std::size_t>(cx.method.stages);
      if (node.name == "A" || node.name == "a") {
        if (idx.size() != 2 || idx[0] < 0 || idx[1] < 0 || std::size_t(idx[0]) >= s || std::size_t(idx[1]) >= s)
          throw CodegenError("coefficient access " + to_string(node) + " out of range");
        cx.note("replaced " + node.name + "[l][i]");
        return Expr::lit(cx.method.A[idx[0]][idx[1]]);
      }
      if (idx.size() != 1 || idx[0] < 0 || std::size_t(idx[0]) >= s)
        throw CodegenError("coefficient access " + to_string(node) + " out of range");
      cx.note("replaced " + node.name + "[i]");
      return Expr::lit(node.name == "b" ? cx.method.b[idx[0]] : cx.method.c[idx[0]]);
    });
    return simplify(x, cx.opts.eliminate_zeros);
  };
  Statement out{rewrite(st.target), rewrite(st.value)};
  if (cx.opts.eliminate_zeros && out.value == out.target) return std::nullopt;
  return out;
}

inline std::vector<KernelNode> specialize_block(const CodeBlock& block, SpecializeContext& cx) {
  std::vector<KernelNode> out;
  for (const auto& node : block) {
    switch (node.kind) {
      case CodeNode::Kind::comp: {
        const Computation* c = cx.tmpl.computation(node.ref);
        auto st = specialize_statement(c->stmt, cx);
        if (st) {
          KernelNode k;
          k.kind = KernelNode::Kind::stmt;
          k.stmt = std::move(*st);
          out.push_back(std::move(k));
        }
        break;
      }
      case CodeNode::Kind::pragma: {
        KernelNode k;
        k.kind = KernelNode::Kind::pragma;
        k.text = node.ref;
        out.push_back(std::move(k));
        break;
      }
      case CodeNode::Kind::loop: {
        const bool over_n = node.trips.kind == Expr::Kind::ident && node.trips.name == "n";
        if (over_n && cx.n) cx.note("n=" + std::to_string(*cx.n));
        Expr begin = Expr::lit(0.0);
        Expr end = simplify(bind_parameters(node.trips, cx));
        if (over_n && cx.component) {
          begin = simplify(bind_parameters(Expr::binary(Expr::Kind::sub, cx.component->first, Expr::lit(1.0)), cx));
          end = simplify(bind_parameters(Expr::binary(Expr::Kind::add, begin, cx.component->size), cx));
        }
        if (node.unroll) {
          if (!begin.is_literal() || !end.is_literal())
            throw CodegenError("kernel " + cx.variant.name + ": cannot unroll loop " + node.var +
                               " with symbolic trip count " + to_string(node.trips));
          cx.note("unrolled " + node.var);
          for (auto v = static_cast<std::int64_t>(begin.value); v < static_cast<std::int64_t>(end.value); ++v) {
            cx.bound.emplace_back(node.var, Expr::lit(double(v)));
            if (over_n) cx.n_loops.push_back(node.var);
            auto body = specialize_block(node.body, cx);
            if (over_n) cx.n_loops.pop_back();
            cx.bound.pop_back();
            for (auto& b : body) out.push_back(std::move(b));
          }
          break;
        }
        KernelNode k;
        k.kind = KernelNode::Kind::loop;
        k.var = node.var;
        k.begin = begin;
        k.end = end;
        if (over_n) cx.n_loops.push_back(node.var);
        cx.bound.emplace_back(node.var, Expr::id(node.var));
        k.body = specialize_block(node.body, cx);
        cx.bound.pop_back();
        if (over_n) cx.n_loops.pop_back();
        out.push_back(std::move(k));
        break;
      }
      case CodeNode::Kind::comm:
      case CodeNode::Kind::kernel:
        throw CodegenError("skeleton keyword inside kernel " + cx.variant.name);
    }
  }
  return out;
}

inline Expr trip_count(const KernelNode& loop) {
  return simplify(Expr::binary(Expr::Kind::sub, loop.end, loop.begin));
}

// Largest product of loop trip counts along any root-to-node path, compared at
// `probe` when symbolic.
inline Expr deepest_trip_product(const std::vector<KernelNode>& block, double probe) {
  Expr best = Expr::lit(1.0);
  double best_v = 1.0;
  for (const auto& k : block) {
    if (k.kind != KernelNode::Kind::loop) continue;
    Expr p = simplify(Expr::binary(Expr::Kind::mul, trip_count(k), deepest_trip_product(k.body, probe)));
    double v = eval_constant(p, {{"n", probe}});
    if (v > best_v) {
      best_v = v;
      best = p;
    }
  }
  return best;
}

inline void collect_arrays(const std::vector<KernelNode>& block, std::set<std::string>& names) {
  auto grab = [&](const Expr& e) {
    visit(e, [&](const Expr& x) {
      if (x.kind == Expr::Kind::access || x.kind == Expr::Kind::ident) names.insert(x.name);
    });
  };
  for (const auto& k : block) {
    if (k.kind == KernelNode::Kind::stmt) {
      grab(k.stmt.target);
      grab(k.stmt.value);
    } else if (k.kind == KernelNode::Kind::loop) {
      grab(k.begin);
      grab(k.end);
      collect_arrays(k.body, names);
    }
  }
}

}  // namespace detail

// Specializes one kernel variant on an ODE method, optionally an IVP
// component (required iff the kernel evaluates %RHS) and optionally a fixed
// system size. Loops over s get literal bounds, unroll-flagged loops are
// expanded, Butcher coefficients with literal indices and IVP constants become
// literals, and terms with a 0.0 coefficient are elided.
inline GeneratedKernel specialize_kernel(const KernelTemplate& tmpl, const KernelVariantDef& variant,
                                         const ODEMethod& method, const IVP* ivp,
                                         std::optional<std::size_t> component, std::optional<std::int64_t> n,
                                         SpecializeOptions opts = {}) {
  if (variant.contains_rhs && (!ivp || !component))
    throw CodegenError("kernel " + variant.name + " contains %RHS but no IVP component was supplied");
  if (!variant.contains_rhs && component)
    throw CodegenError("kernel " + variant.name + " does not evaluate the IVP; no component expected");
  const IVPComponent* comp = nullptr;
  if (component) {
    if (*component >= ivp->components.size())
      throw CodegenError("IVP " + ivp->name + " has no component " + std::to_string(*component));
    comp = &ivp->components[*component];
  }
  if (n && ivp && *n < ivp->n_min)
    throw CodegenError("n=" + std::to_string(*n) + " is below the smallest size of IVP " + ivp->name);

  detail::SpecializeContext cx{tmpl, variant, method, ivp, comp, n, opts, {}, {}, {}};
  GeneratedKernel g;
  g.kernel = variant.name;
  g.templ = tmpl.name;
  g.method = method.name;
  if (variant.contains_rhs) {
    g.ivp = ivp->name;
    g.component = component;
  }
  g.n = n;
  g.stages = method.stages;
  for (const auto& top : variant.code) {
    auto part = detail::specialize_block(CodeBlock{top}, cx);
    g.nest_sizes.push_back(part.size());
    for (auto& k : part) g.body.push_back(std::move(k));
  }
  g.beta = detail::deepest_trip_product(g.body, n ? double(*n) : 1000.0);
  for (const auto& ws : variant.working_sets)
    g.working_sets.push_back(simplify(substitute_ident(ws, "s", Expr::lit(method.stages))));

  std::set<std::string> used;
  detail::collect_arrays(g.body, used);
  const bool empty = count_statements(g.body) == 0;
  for (const auto& d : tmpl.datastructs) {
    if (!used.count(d.name) && !(empty && !is_coefficient_array(d.name))) continue;
    DataStruct decl = d;
    Expr elems = Expr::lit(1.0);
    for (const auto& dim : d.dims) elems = Expr::binary(Expr::Kind::mul, elems, dim);
    g.footprints[d.name] = simplify(substitute_ident(elems, "s", Expr::lit(method.stages)));
    for (auto& dim : decl.dims) {
      dim = substitute_ident(dim, "s", Expr::lit(method.stages));
      if (n) dim = substitute_ident(dim, "n", Expr::lit(double(*n)));
      dim = simplify(dim);
    }
    if (is_coefficient_array(d.name)) g.coefficients[d.name] = flatten_coefficients(d.name, method);
    g.arrays.push_back(std::move(decl));
  }
  // Loop comments mirror the applied specializations.
  std::string note;
  for (const auto& s : cx.notes) note += (note.empty() ? "" : "; ") + s;
  for (auto& k : g.body)
    if (k.kind == KernelNode::Kind::loop && !note.empty()) k.text = note;
  return g;
}

// Visits the specializations of one kernel in execution order. Top-level
// nests run one after another; within a nest every component specialization
// runs before the next nest starts, so a nest that writes data read by the
// right-hand side of a neighbouring component sees a consistent state.
template <class F>
void for_each_nest(const std::vector<GeneratedKernel>& ks, F&& f) {
  if (ks.empty()) return;
  const std::size_t nests = ks.front().nest_sizes.size();
  std::vector<std::size_t> pos(ks.size(), 0);
  for (std::size_t t = 0; t < nests; ++t) {
    for (std::size_t c = 0; c < ks.size(); ++c) {
      if (ks[c].nest_sizes.size() != nests) throw CodegenError("kernel " + ks[c].kernel + ": inconsistent nests");
      f(ks[c], pos[c], pos[c] + ks[c].nest_sizes[t]);
      pos[c] += ks[c].nest_sizes[t];
    }
  }
}

// All specializations a kernel needs: one per IVP component when it
// evaluates the right-hand side, otherwise exactly one.
inline std::vector<GeneratedKernel> specialize_for_ivp(const KernelTemplate& tmpl, const KernelVariantDef& variant,
                                                       const ODEMethod& method, const IVP& ivp,
                                                       std::optional<std::int64_t> n, SpecializeOptions opts = {}) {
  std::vector<GeneratedKernel> out;
  if (!variant.contains_rhs) {
    out.push_back(specialize_kernel(tmpl, variant, method, nullptr, std::nullopt, n, opts));
    return out;
  }
  for (std::size_t c = 0; c < ivp.components.size(); ++c)
    out.push_back(specialize_kernel(tmpl, variant, method, &ivp, c, n, opts));
  return out;
}

// ---------------------------------------------------------------------------
// Barriers

inline std::int64_t count_barriers(const ImplSkeleton& sk, const ODEMethod& method) {
  std::vector<std::pair<std::string, double>> b = {{"m", double(method.corrector_steps)},
                                                   {"s", double(method.stages)}};
  auto rec = [&](auto&& self, const CodeBlock& block) -> std::int64_t {
    std::int64_t total = 0;
    for (const auto& n : block) {
      if (n.kind == CodeNode::Kind::comm && n.ref == kBarrier) {
        ++total;
      } else if (n.kind == CodeNode::Kind::loop) {
        auto trips = static_cast<std::int64_t>(eval_constant(n.trips, b));
        total += std::max<std::int64_t>(trips, 0) * self(self, n.body);
      }
    }
    return total;
  };
  return rec(rec, sk.code);
}

// ---------------------------------------------------------------------------
// Emission

namespace detail {

inline std::string declaration(const DataStruct& d, bool with_type = true) {
  std::string s = with_type ? d.type + " " + d.name : d.name;
  for (const auto& dim : d.dims) s += "[" + to_string(dim, true) + "]";
  return s;
}

inline void emit_nodes(const std::vector<KernelNode>& block, std::string& out, int depth) {
  const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
  for (const auto& k : block) {
    switch (k.kind) {
      case KernelNode::Kind::stmt: out += pad + to_string(k.stmt) + ";\n"; break;
      case KernelNode::Kind::pragma: out += "#pragma " + k.text + "\n"; break;
      case KernelNode::Kind::loop:
        out += pad + "for (int " + k.var + "=" + to_string(k.begin, true) + "; " + k.var + "<" +
               to_string(k.end, true) + "; ++" + k.var + ") {";
        if (!k.text.empty()) out += " // " + k.text;
        out += "\n";
        emit_nodes(k.body, out, depth + 1);
        out += pad + "}\n";
        break;
    }
  }
}

inline std::string coefficient_initializer(const DataStruct& d, const std::vector<double>& values) {
  std::string s = "static const " + declaration(d) + " = {";
  for (std::size_t i = 0; i < values.size(); ++i) s += (i ? ", " : "") + format_double(values[i]);
  return s + "};";
}

}  // namespace detail

inline std::string kernel_file_name(const GeneratedKernel& g, std::size_t components = 1) {
  std::string ivp = g.ivp.empty() ? "none" : g.ivp;
  if (g.component && components > 1) ivp += "-c" + std::to_string(*g.component);
  return g.kernel + "_" + g.method + "_" + ivp + "_" + (g.n ? std::to_string(*g.n) : std::string("n")) + ".c";
}

// Self-contained loop kernel in the format loop-kernel analyzers consume:
// declarations with literal extents followed by the loop nest.
inline std::string emit_analyzer_kernel(const GeneratedKernel& g) {
  if (!g.n) throw CodegenError("kernel " + g.kernel + ": analyzer code needs a fixed n");
  std::string out;
  for (const auto& d : g.arrays) {
    if (is_coefficient_array(d.name)) {
      out += detail::coefficient_initializer(d, g.coefficients.at(d.name)) + "\n";
      continue;
    }
    out += detail::declaration(d) + ";\n";
  }
  detail::emit_nodes(g.body, out, 0);
  return out;
}

// Specializations of every kernel a variant uses, keyed by template name.
struct VariantSpecialization {
  ImplVariant variant;
  ImplSkeleton skeleton;
  std::string method;
  int corrector_steps = 0;
  int stages = 0;
  std::string ivp;
  std::optional<std::int64_t> n;
  std::map<std::string, std::vector<GeneratedKernel>> kernels;
};

inline VariantSpecialization specialize_variant(const ImplVariant& v, const ImplSkeleton& sk,
                                                const std::vector<KernelTemplate>& templates,
                                                const ODEMethod& method, const IVP& ivp,
                                                std::optional<std::int64_t> n, SpecializeOptions opts = {}) {
  if (v.skeleton != sk.name) throw CodegenError("variant " + v.id + " does not belong to skeleton " + sk.name);
  VariantSpecialization out{v, sk, method.name, method.corrector_steps, method.stages, ivp.name, n, {}};
  for (const auto& t : sk.required_templates) {
    const KernelTemplate& tmpl = find_template(templates, t);
    const std::string& kname = v.kernel_for(t);
    const KernelVariantDef* def = tmpl.variant(kname);
    if (!def) throw CodegenError("missing kernel specialization: template " + t + " has no kernel " + kname);
    out.kernels[t] = specialize_for_ivp(tmpl, *def, method, ivp, n, opts);
  }
  return out;
}

// Full C source of a variant's timestep function. Barriers become OpenMP
// barrier directives; skeleton loops keep literal bounds.
inline std::string generate_variant_code(const VariantSpecialization& vs) {
  // Parameter list: union of all referenced non-coefficient data.
  std::vector<DataStruct> params;
  std::vector<std::pair<DataStruct, std::vector<double>>> coeffs;
  for (const auto& tname : vs.skeleton.required_templates) {
    auto it = vs.kernels.find(tname);
    if (it == vs.kernels.end()) throw CodegenError("missing kernel specialization for template " + tname);
    for (const auto& g : it->second) {
      for (const auto& d : g.arrays) {
        if (is_coefficient_array(d.name)) {
          bool seen = std::any_of(coeffs.begin(), coeffs.end(), [&](const auto& c) { return c.first.name == d.name; });
          if (!seen) coeffs.emplace_back(d, g.coefficients.at(d.name));
          continue;
        }
        auto p = std::find_if(params.begin(), params.end(), [&](const DataStruct& x) { return x.name == d.name; });
        if (p == params.end()) {
          params.push_back(d);
        } else if (!(p->dims == d.dims)) {
          throw CodegenError("variant " + vs.variant.id + ": templates disagree on the shape of " + d.name);
        }
      }
    }
  }

  std::string out;
  out += "// Implementation variant " + vs.variant.id + " (skeleton " + vs.skeleton.name + ")\n";
  out += "// method " + vs.method + ", IVP " + vs.ivp + ", n=" + (vs.n ? std::to_string(*vs.n) : std::string("runtime")) + "\n";
  out += "void timestep(";
  bool first = true;
  if (!vs.n) {
    out += "int n";
    first = false;
  }
  for (const auto& d : params) {
    out += (first ? "" : ", ") + detail::declaration(d);
    first = false;
  }
  out += ") {\n";
  for (const auto& [d, v] : coeffs) out += "  " + detail::coefficient_initializer(d, v) + "\n";

  const std::vector<std::pair<std::string, double>> bind = {{"m", double(vs.corrector_steps)},
                                                            {"s", double(vs.stages)}};
  auto rec = [&](auto&& self, const CodeBlock& block, int depth) -> void {
    const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
    for (const auto& node : block) {
      switch (node.kind) {
        case CodeNode::Kind::comm: out += "#pragma omp barrier\n"; break;
        case CodeNode::Kind::loop: {
          auto trips = static_cast<std::int64_t>(eval_constant(node.trips, bind));
          out += pad + "for (int " + node.var + "=0; " + node.var + "<" + std::to_string(trips) + "; ++" +
                 node.var + ") { // " + to_string(node.trips, true) + "=" + std::to_string(trips) + "\n";
          self(self, node.body, depth + 1);
          out += pad + "}\n";
          break;
        }
        case CodeNode::Kind::kernel: {
          const auto& ks = vs.kernels.at(node.ref);
          out += pad + "// Kernel " + ks.front().kernel + " (template " + node.ref + ")\n";
          for_each_nest(ks, [&](const GeneratedKernel& g, std::size_t b, std::size_t e) {
            if (b == e) return;
            if (g.component) out += pad + "// IVP component " + std::to_string(*g.component) + "\n";
            detail::emit_nodes({g.body.begin() + static_cast<std::ptrdiff_t>(b), g.body.begin() + static_cast<std::ptrdiff_t>(e)},
                               out, depth);
          });
          break;
        }
        default: throw CodegenError("kernel keyword inside skeleton " + vs.skeleton.name);
      }
    }
  };
  rec(rec, vs.skeleton.code, 1);
  out += "}\n";
  return out;
}

}  // namespace pirktune
