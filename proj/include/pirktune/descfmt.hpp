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

// Typed models of the five description documents (ODE method, IVP, machine,
// kernel template, implementation skeleton), their YAML parsers and
// serializers, and cross-document validation of a tuning scenario.

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pirktune/codeblock.hpp"
#include "pirktune/error.hpp"
#include "pirktune/expr.hpp"

namespace pirktune {

// ---------------------------------------------------------------------------
// Models

struct ODEMethod {
  std::string name;
  int stages = 0;
  int order = 0;
  int corrector_steps = 0;
  std::vector<std::vector<double>> A;
  std::vector<double> b;
  std::vector<double> c;

  bool operator==(const ODEMethod&) const = default;
};

struct IVPConstant {
  std::string type;
  std::string name;
  double value = 0.0;
  bool operator==(const IVPConstant&) const = default;
};

// One block of adjacent components sharing the same right-hand side. `first`
// is 1-based as written in the document; `code` indexes %in with the 0-based
// component index j.
struct IVPComponent {
  Expr first;
  Expr size;
  Expr code;
  bool operator==(const IVPComponent&) const = default;

  std::int64_t begin(std::int64_t n) const {
    return static_cast<std::int64_t>(eval_constant(first, {{"n", double(n)}})) - 1;
  }
  std::int64_t count(std::int64_t n) const {
    return static_cast<std::int64_t>(eval_constant(size, {{"n", double(n)}}));
  }
};

struct IVP {
  std::string name;
  std::vector<IVPComponent> components;  // sorted by first index
  std::vector<IVPConstant> constants;
  std::optional<std::int64_t> access_distance;  // nullopt with unlimited_access=false: not given
  bool unlimited_access = false;
  std::optional<std::int64_t> n;                // fixed system size
  std::int64_t n_min = 1;

  bool operator==(const IVP&) const = default;
};

enum class OpClass { add, mul, fma, div, load, store };

inline const char* op_class_name(OpClass c) {
  switch (c) {
    case OpClass::add: return "ADD";
    case OpClass::mul: return "MUL";
    case OpClass::fma: return "FMA";
    case OpClass::div: return "DIV";
    case OpClass::load: return "LOAD";
    case OpClass::store: return "STORE";
  }
  return "?";
}

struct CacheLevel {
  std::string name;
  std::int64_t capacity = 0;  // bytes
  bool shared = false;
  // Transfer between this level and the next one down (the next cache, or
  // main memory for the last level).
  double cycles_per_cl = 0.0;  // 0 on the last level: derived from bandwidth
  double penalty = 0.0;        // latency penalty, cycles per cache line
  bool overlapping = false;
  bool operator==(const CacheLevel&) const = default;
};

struct MachineModel {
  std::string name;
  std::string model_name;
  double clock_hz = 0.0;
  int cores = 0;
  std::int64_t cache_line = 0;
  std::vector<CacheLevel> caches;            // L1 first
  std::map<OpClass, double> throughput;      // ops per cycle; FMA may be absent
  std::vector<double> bandwidth;             // bytes/s for 1..cores active cores
  std::vector<std::pair<int, double>> barrier_samples;  // (threads, seconds)
  std::string compiler;

  bool operator==(const MachineModel&) const = default;

  bool has_fma() const {
    auto it = throughput.find(OpClass::fma);
    return it != throughput.end() && it->second > 0.0;
  }
  std::size_t levels() const { return caches.size() + 1; }  // caches plus memory
  std::string level_name(std::size_t i) const { return i < caches.size() ? caches[i].name : "MEM"; }
  std::string pair_name(std::size_t p) const { return level_name(p) + level_name(p + 1); }

  // Cycles per cache line for the transfer between level p and p+1. The
  // memory link falls back to the saturated benchmark bandwidth.
  double transfer_cost(std::size_t p) const {
    const CacheLevel& lv = caches.at(p);
    if (lv.cycles_per_cl > 0.0) return lv.cycles_per_cl;
    double bw = *std::max_element(bandwidth.begin(), bandwidth.end());
    return double(cache_line) * clock_hz / bw;
  }

  // Effective bandwidth with `tau` active cores: the best of any table entry
  // up to tau, so adding cores never lowers available bandwidth.
  double bandwidth_at(int tau) const {
    double bw = 0.0;
    for (int t = 1; t <= tau && t <= static_cast<int>(bandwidth.size()); ++t) bw = std::max(bw, bandwidth[t - 1]);
    return bw;
  }

  std::int64_t elements_per_cl(std::int64_t elem_bytes = 8) const { return cache_line / elem_bytes; }
};

struct DataStruct {
  std::string type;
  std::string name;
  std::vector<Expr> dims;  // over s, n and literals; empty for scalars
  bool operator==(const DataStruct&) const = default;
};

struct Computation {
  std::string id;
  Statement stmt;
  bool operator==(const Computation&) const = default;
};

struct KernelVariantDef {
  std::string name;
  CodeBlock code;
  std::vector<Expr> working_sets;
  bool contains_rhs = false;
  bool operator==(const KernelVariantDef&) const = default;
};

struct KernelTemplate {
  std::string name;
  std::vector<DataStruct> datastructs;
  std::vector<Computation> computations;
  std::vector<KernelVariantDef> variants;
  bool operator==(const KernelTemplate&) const = default;

  bool contains_rhs() const {
    return std::any_of(variants.begin(), variants.end(), [](const auto& v) { return v.contains_rhs; });
  }
  const Computation* computation(std::string_view id) const {
    for (const auto& c : computations)
      if (c.id == id) return &c;
    return nullptr;
  }
  const KernelVariantDef* variant(std::string_view n) const {
    for (const auto& v : variants)
      if (v.name == n) return &v;
    return nullptr;
  }
  const DataStruct* datastruct(std::string_view n) const {
    for (const auto& d : datastructs)
      if (d.name == n) return &d;
    return nullptr;
  }
};

struct ImplSkeleton {
  std::string name;
  CodeBlock code;
  std::vector<std::string> required_templates;  // first-occurrence order
  bool operator==(const ImplSkeleton&) const = default;
};

inline constexpr std::string_view kBarrier = "barrier";

struct TuningScenario {
  MachineModel machine;
  std::vector<ODEMethod> methods;
  std::vector<IVP> ivps;
  std::vector<KernelTemplate> templates;
  std::vector<ImplSkeleton> skeletons;
  std::optional<std::int64_t> n;
  std::optional<std::int64_t> n_max;
  std::vector<int> cores{1};
  double deviation = 5.0;
};

struct ValidatedScenario : TuningScenario {
  const KernelTemplate& template_named(std::string_view name) const {
    for (const auto& t : templates)
      if (t.name == name) return t;
    throw ParseError("unknown kernel template '" + std::string(name) + "'");
  }
  const ImplSkeleton& skeleton_named(std::string_view name) const {
    for (const auto& s : skeletons)
      if (s.name == name) return s;
    throw ParseError("unknown implementation skeleton '" + std::string(name) + "'");
  }
};

// ---------------------------------------------------------------------------
// YAML helpers

namespace detail {

inline YAML::Node load_yaml(std::string_view document, std::string_view what) {
  try {
    YAML::Node n = YAML::Load(std::string(document));
    if (!n.IsMap()) throw ParseError(std::string(what) + " document must be a mapping");
    return n;
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string(what) + " document is not valid YAML: " + e.what());
  }
}

inline YAML::Node require(const YAML::Node& n, const char* key, std::string_view what) {
  YAML::Node v = n[key];
  if (!v) throw ParseError(std::string(what) + ": missing key '" + key + "'");
  return v;
}

inline std::string scalar(const YAML::Node& n, std::string_view what) {
  if (!n.IsScalar()) throw ParseError(std::string(what) + " must be a scalar");
  return n.Scalar();
}

inline std::int64_t integer(const YAML::Node& n, std::string_view what) {
  std::string s = scalar(n, what);
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ParseError(std::string(what) + " must be an integer, got '" + s + "'");
  return v;
}

inline double number(const YAML::Node& n, std::string_view what) {
  return eval_constant(parse_expr(scalar(n, what)));
}

inline bool boolean(const YAML::Node& n, std::string_view what) {
  std::string s = scalar(n, what);
  if (s == "true" || s == "yes") return true;
  if (s == "false" || s == "no") return false;
  throw ParseError(std::string(what) + " must be a boolean, got '" + s + "'");
}

inline std::vector<double> coefficients(const YAML::Node& n, std::string_view what) {
  if (!n.IsSequence()) throw ParseError(std::string(what) + " must be a sequence");
  std::vector<double> out;
  for (std::size_t i = 0; i < n.size(); ++i) {
    double v = eval_constant(parse_expr(scalar(n[i], what)));
    out.push_back(v);
  }
  return out;
}

// "2.3 GHz", "32 kB", "73.6 GB/s", "64 B" or a bare number.
inline double quantity(const YAML::Node& n, std::string_view what) {
  std::string s = scalar(n, what);
  std::istringstream in(s);
  double v = 0.0;
  if (!(in >> v)) throw ParseError(std::string(what) + ": cannot read number from '" + s + "'");
  std::string unit;
  in >> unit;
  static const std::map<std::string, double, std::less<>> kUnits = {
      {"", 1.0},         {"B", 1.0},          {"Hz", 1.0},        {"kHz", 1e3},        {"MHz", 1e6},
      {"GHz", 1e9},      {"kB", 1024.0},      {"KB", 1024.0},     {"KiB", 1024.0},     {"MB", 1048576.0},
      {"MiB", 1048576.0}, {"GB", 1073741824.0}, {"GiB", 1073741824.0}, {"B/s", 1.0},    {"kB/s", 1e3},
      {"MB/s", 1e6},     {"GB/s", 1e9},       {"cy", 1.0},        {"cy/CL", 1.0},      {"s", 1.0}};
  auto it = kUnits.find(unit);
  if (it == kUnits.end()) throw ParseError(std::string(what) + ": unknown unit '" + unit + "'");
  return v * it->second;
}

inline std::vector<Expr> expression_list(const YAML::Node& n, std::string_view what) {
  std::vector<Expr> out;
  if (n.IsSequence()) {
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(parse_expr(scalar(n[i], what)));
  } else if (n.IsMap()) {
    // Flow mappings with bare keys, e.g. { "(s+1)*n+s", "2*n" }.
    for (auto it = n.begin(); it != n.end(); ++it) out.push_back(parse_expr(it->first.Scalar()));
  } else {
    out.push_back(parse_expr(scalar(n, what)));
  }
  return out;
}

inline std::string yaml_str(const YAML::Emitter& e) { return std::string(e.c_str()) + "\n"; }

}  // namespace detail

// ---------------------------------------------------------------------------
// ODE method

inline ODEMethod parse_method(std::string_view document, std::string_view default_name = "method") {
  const YAML::Node doc = detail::load_yaml(document, "method");
  ODEMethod m;
  m.name = doc["name"] ? detail::scalar(doc["name"], "name") : std::string(default_name);
  m.stages = static_cast<int>(detail::integer(detail::require(doc, "stages", "method"), "stages"));
  m.order = static_cast<int>(detail::integer(detail::require(doc, "order", "method"), "order"));
  m.corrector_steps =
      static_cast<int>(detail::integer(detail::require(doc, "corrector_steps", "method"), "corrector_steps"));
  if (m.stages < 1) throw ParseError("method: stages must be >= 1");
  if (m.order < 1) throw ParseError("method: order must be >= 1");
  if (m.corrector_steps < 1) throw ParseError("method: corrector_steps must be >= 1");

  const YAML::Node a = detail::require(doc, "A", "method");
  if (!a.IsSequence()) throw ParseError("method: A must be a sequence of rows");
  for (std::size_t i = 0; i < a.size(); ++i) m.A.push_back(detail::coefficients(a[i], "A row"));
  m.b = detail::coefficients(detail::require(doc, "b", "method"), "b");
  m.c = detail::coefficients(detail::require(doc, "c", "method"), "c");

  const auto s = static_cast<std::size_t>(m.stages);
  if (m.A.size() != s) throw ParseError("method: A has " + std::to_string(m.A.size()) + " rows, expected " + std::to_string(s));
  for (std::size_t i = 0; i < s; ++i)
    if (m.A[i].size() != s)
      throw ParseError("method: A row " + std::to_string(i) + " has " + std::to_string(m.A[i].size()) +
                       " entries, expected " + std::to_string(s));
  if (m.b.size() != s) throw ParseError("method: b has " + std::to_string(m.b.size()) + " entries, expected " + std::to_string(s));
  if (m.c.size() != s) throw ParseError("method: c has " + std::to_string(m.c.size()) + " entries, expected " + std::to_string(s));
  return m;
}

inline std::string serialize_method(const ODEMethod& m) {
  YAML::Emitter e;
  e << YAML::BeginMap;
  e << YAML::Key << "name" << YAML::Value << m.name;
  e << YAML::Key << "stages" << YAML::Value << m.stages;
  e << YAML::Key << "order" << YAML::Value << m.order;
  e << YAML::Key << "corrector_steps" << YAML::Value << m.corrector_steps;
  auto row = [&](const std::vector<double>& r) {
    e << YAML::Flow << YAML::BeginSeq;
    for (double v : r) e << YAML::DoubleQuoted << format_double(v);
    e << YAML::EndSeq;
  };
  e << YAML::Key << "A" << YAML::Value << YAML::BeginSeq;
  for (const auto& r : m.A) row(r);
  e << YAML::EndSeq;
  e << YAML::Key << "b" << YAML::Value;
  row(m.b);
  e << YAML::Key << "c" << YAML::Value;
  row(m.c);
  e << YAML::EndMap;
  return detail::yaml_str(e);
}

// ---------------------------------------------------------------------------
// IVP

namespace detail {

inline IVPConstant parse_constant(std::string_view text) {
  // "double R = 1.0"
  auto eq = text.find('=');
  if (eq == std::string_view::npos) throw ParseError("IVP constant '" + std::string(text) + "' lacks '='");
  auto lhs = split_ws(text.substr(0, eq));
  if (lhs.size() != 2 || !is_identifier(lhs[1]))
    throw ParseError("IVP constant '" + std::string(text) + "' must read '<type> <name> = <value>'");
  Expr v = parse_expr(trim(text.substr(eq + 1)));
  if (!v.is_literal()) throw ParseError("IVP constant '" + lhs[1] + "' must be a numeric literal");
  if (!std::isfinite(v.value)) throw ParseError("IVP constant '" + lhs[1] + "' is not finite");
  return IVPConstant{lhs[0], lhs[1], v.value};
}

inline void check_rhs_code(const Expr& code, const IVP& ivp) {
  visit(code, [&](const Expr& e) {
    switch (e.kind) {
      case Expr::Kind::ident: {
        bool ok = e.name == "j";
        for (const auto& c : ivp.constants) ok = ok || c.name == e.name;
        if (!ok) throw ParseError("IVP " + ivp.name + ": unknown identifier '" + e.name + "' in component code");
        break;
      }
      case Expr::Kind::access:
        throw ParseError("IVP " + ivp.name + ": component code may only read the input vector via %in");
      case Expr::Kind::rhs: throw ParseError("IVP " + ivp.name + ": %RHS is not allowed in component code");
      default: break;
    }
  });
  if (!ivp.access_distance) return;
  visit(code, [&](const Expr& e) {
    if (e.kind != Expr::Kind::input) return;
    auto p = to_poly(e.args[0], "j");
    bool ok = p && p->degree() <= 1 && (p->degree() == 0 ? false : p->c[1] == 1.0) &&
              std::fabs(p->c[0]) <= double(*ivp.access_distance);
    if (!ok)
      throw ParseError("IVP " + ivp.name + ": access %in[" + to_string(e.args[0], true) +
                       "] exceeds access distance " + std::to_string(*ivp.access_distance));
  });
}

}  // namespace detail

inline IVP parse_ivp(std::string_view document, std::string_view default_name = "ivp") {
  const YAML::Node doc = detail::load_yaml(document, "IVP");
  IVP ivp;
  ivp.name = doc["name"] ? detail::scalar(doc["name"], "name") : std::string(default_name);

  if (const YAML::Node d = doc["access distance"]) {
    std::string s = detail::scalar(d, "access distance");
    if (s == "unlimited") {
      ivp.unlimited_access = true;
    } else {
      ivp.access_distance = detail::integer(d, "access distance");
      if (*ivp.access_distance < 0) throw ParseError("IVP: access distance must be non-negative");
    }
  }
  if (const YAML::Node n = doc["n"]) {
    ivp.n = detail::integer(n, "n");
    if (*ivp.n < 1) throw ParseError("IVP: n must be positive");
  }

  if (const YAML::Node cs = doc["constants"]) {
    if (!cs.IsSequence()) throw ParseError("IVP: constants must be a sequence");
    for (std::size_t i = 0; i < cs.size(); ++i) {
      IVPConstant c = detail::parse_constant(detail::scalar(cs[i], "constant"));
      for (const auto& prev : ivp.constants)
        if (prev.name == c.name) throw ParseError("IVP " + ivp.name + ": duplicate constant '" + c.name + "'");
      ivp.constants.push_back(c);
    }
  }

  YAML::Node comps = detail::require(doc, "components", "IVP");
  std::vector<YAML::Node> blocks;
  if (comps.IsMap()) {
    blocks.push_back(comps);
  } else if (comps.IsSequence()) {
    for (std::size_t i = 0; i < comps.size(); ++i) blocks.push_back(comps[i]);
  } else {
    throw ParseError("IVP: components must be a mapping or a sequence");
  }
  if (blocks.empty()) throw ParseError("IVP: no components");
  for (const auto& b : blocks) {
    IVPComponent c;
    c.first = parse_expr(detail::scalar(detail::require(b, "first", "IVP component"), "first"));
    c.size = parse_expr(detail::scalar(detail::require(b, "size", "IVP component"), "size"));
    c.code = parse_expr(detail::scalar(detail::require(b, "code", "IVP component"), "code"));
    for (const Expr* e : {&c.first, &c.size}) {
      if (!to_poly(*e, "n")) throw ParseError("IVP: component bound '" + to_string(*e) + "' is not polynomial in n");
    }
    detail::check_rhs_code(c.code, ivp);
    ivp.components.push_back(std::move(c));
  }

  // n_min: smallest n from which every block is non-empty.
  const std::int64_t probe_limit = 1 << 20;
  ivp.n_min = 0;
  for (std::int64_t n = 1; n <= probe_limit; ++n) {
    bool ok = true;
    for (const auto& c : ivp.components) ok = ok && c.count(n) >= 1 && c.begin(n) >= 0;
    if (ok) {
      ivp.n_min = n;
      break;
    }
  }
  if (ivp.n_min == 0) throw ParseError("IVP " + ivp.name + ": component sizes are never all positive");

  // Tiling check, symbolic in n: ordered by first index at n_min, each block
  // must start where the previous one ended and the last must end at n.
  std::stable_sort(ivp.components.begin(), ivp.components.end(), [&](const auto& a, const auto& b) {
    return a.begin(ivp.n_min) < b.begin(ivp.n_min);
  });
  Poly expected = Poly::constant(1.0);
  for (const auto& c : ivp.components) {
    Poly first = *to_poly(c.first, "n");
    Poly diff = first - expected;
    if (!(diff == Poly::constant(0.0))) {
      bool overlap = diff(double(ivp.n_min)) < 0 || (diff.degree() > 0 && diff.c.back() < 0);
      throw ParseError("IVP " + ivp.name + ": component starting at '" + to_string(c.first) + "' " +
                       (overlap ? "overlaps the previous block" : "leaves a gap before it"));
    }
    expected = first + *to_poly(c.size, "n");
  }
  if (!(expected == Poly{{1.0, 1.0}}))
    throw ParseError("IVP " + ivp.name + ": components do not end at n");
  if (ivp.n && *ivp.n < ivp.n_min) throw ParseError("IVP " + ivp.name + ": fixed n below the smallest valid size");
  return ivp;
}

inline std::string serialize_ivp(const IVP& ivp) {
  YAML::Emitter e;
  e << YAML::BeginMap;
  e << YAML::Key << "name" << YAML::Value << ivp.name;
  if (ivp.unlimited_access) e << YAML::Key << "access distance" << YAML::Value << "unlimited";
  if (ivp.access_distance) e << YAML::Key << "access distance" << YAML::Value << *ivp.access_distance;
  if (ivp.n) e << YAML::Key << "n" << YAML::Value << *ivp.n;
  if (!ivp.constants.empty()) {
    e << YAML::Key << "constants" << YAML::Value << YAML::BeginSeq;
    for (const auto& c : ivp.constants) e << (c.type + " " + c.name + " = " + format_double(c.value));
    e << YAML::EndSeq;
  }
  e << YAML::Key << "components" << YAML::Value << YAML::BeginSeq;
  for (const auto& c : ivp.components) {
    e << YAML::BeginMap;
    e << YAML::Key << "first" << YAML::Value << to_string(c.first, true);
    e << YAML::Key << "size" << YAML::Value << to_string(c.size, true);
    e << YAML::Key << "code" << YAML::Value << YAML::DoubleQuoted << to_string(c.code);
    e << YAML::EndMap;
  }
  e << YAML::EndSeq << YAML::EndMap;
  return detail::yaml_str(e);
}

// ---------------------------------------------------------------------------
// Machine

inline MachineModel parse_machine(std::string_view document, std::string_view default_name = "machine") {
  const YAML::Node doc = detail::load_yaml(document, "machine");
  MachineModel m;
  m.name = doc["name"] ? detail::scalar(doc["name"], "name") : std::string(default_name);
  if (doc["model name"]) m.model_name = detail::scalar(doc["model name"], "model name");
  if (doc["compiler"]) m.compiler = detail::scalar(doc["compiler"], "compiler");
  m.clock_hz = detail::quantity(detail::require(doc, "clock", "machine"), "clock");
  m.cores = static_cast<int>(detail::integer(detail::require(doc, "cores per socket", "machine"), "cores per socket"));
  m.cache_line = static_cast<std::int64_t>(detail::quantity(detail::require(doc, "cacheline size", "machine"), "cacheline size"));
  if (m.clock_hz <= 0) throw ParseError("machine: clock must be positive");
  if (m.cores < 1) throw ParseError("machine: cores per socket must be positive");
  if (m.cache_line <= 0 || m.cache_line % 8 != 0) throw ParseError("machine: cacheline size must be a positive multiple of 8 B");

  const YAML::Node tp = detail::require(doc, "throughput", "machine");
  for (OpClass c : {OpClass::add, OpClass::mul, OpClass::fma, OpClass::div, OpClass::load, OpClass::store}) {
    const YAML::Node v = tp[op_class_name(c)];
    if (!v) {
      if (c == OpClass::fma) continue;
      throw ParseError(std::string("machine: missing throughput entry ") + op_class_name(c));
    }
    std::string s = detail::scalar(v, "throughput");
    if (c == OpClass::fma && (s == "-" || s == "0")) continue;
    double x = detail::number(v, "throughput");
    if (!(x > 0)) throw ParseError(std::string("machine: throughput ") + op_class_name(c) + " must be positive");
    m.throughput[c] = x;
  }

  const YAML::Node mh = detail::require(doc, "memory hierarchy", "machine");
  if (!mh.IsSequence() || mh.size() == 0) throw ParseError("machine: memory hierarchy must list cache levels");
  for (std::size_t i = 0; i < mh.size(); ++i) {
    const YAML::Node lv = mh[i];
    CacheLevel c;
    c.name = detail::scalar(detail::require(lv, "level", "cache level"), "level");
    c.capacity = static_cast<std::int64_t>(detail::quantity(detail::require(lv, "size", "cache level"), "size"));
    if (lv["shared"]) c.shared = detail::boolean(lv["shared"], "shared");
    if (lv["cycles per cacheline"]) c.cycles_per_cl = detail::quantity(lv["cycles per cacheline"], "cycles per cacheline");
    if (lv["penalty"]) c.penalty = detail::quantity(lv["penalty"], "penalty");
    if (lv["overlapping"]) c.overlapping = detail::boolean(lv["overlapping"], "overlapping");
    if (c.capacity <= 0) throw ParseError("machine: cache " + c.name + " has non-positive size");
    if (c.cycles_per_cl < 0 || c.penalty < 0) throw ParseError("machine: cache " + c.name + " has negative transfer cost");
    if (!m.caches.empty() && c.capacity <= m.caches.back().capacity)
      throw ParseError("machine: cache " + c.name + " is not larger than " + m.caches.back().name);
    m.caches.push_back(c);
  }
  for (std::size_t i = 0; i + 1 < m.caches.size(); ++i)
    if (m.caches[i].cycles_per_cl <= 0)
      throw ParseError("machine: cache " + m.caches[i].name + " needs 'cycles per cacheline' to the next level");

  const YAML::Node bench = detail::require(doc, "benchmarks", "machine");
  const YAML::Node bw = detail::require(bench, "bandwidth", "benchmarks");
  if (!bw.IsSequence() || bw.size() == 0) throw ParseError("machine: empty bandwidth table");
  for (std::size_t i = 0; i < bw.size(); ++i) {
    double v = detail::quantity(bw[i], "bandwidth");
    if (!(v > 0)) throw ParseError("machine: bandwidth entries must be positive");
    m.bandwidth.push_back(v);
  }
  if (static_cast<int>(m.bandwidth.size()) != m.cores)
    throw ParseError("machine: bandwidth table has " + std::to_string(m.bandwidth.size()) + " entries for " +
                     std::to_string(m.cores) + " cores");
  if (const YAML::Node br = bench["barrier"]) {
    if (!br.IsSequence()) throw ParseError("machine: barrier benchmark must be a sequence of [threads, seconds]");
    for (std::size_t i = 0; i < br.size(); ++i) {
      if (!br[i].IsSequence() || br[i].size() != 2) throw ParseError("machine: barrier samples are [threads, seconds] pairs");
      m.barrier_samples.emplace_back(static_cast<int>(detail::integer(br[i][0], "threads")),
                                     detail::number(br[i][1], "seconds"));
    }
  }
  return m;
}

inline std::string serialize_machine(const MachineModel& m) {
  YAML::Emitter e;
  e << YAML::BeginMap;
  e << YAML::Key << "name" << YAML::Value << m.name;
  if (!m.model_name.empty()) e << YAML::Key << "model name" << YAML::Value << m.model_name;
  if (!m.compiler.empty()) e << YAML::Key << "compiler" << YAML::Value << m.compiler;
  e << YAML::Key << "clock" << YAML::Value << format_double(m.clock_hz);
  e << YAML::Key << "cores per socket" << YAML::Value << m.cores;
  e << YAML::Key << "cacheline size" << YAML::Value << m.cache_line;
  e << YAML::Key << "throughput" << YAML::Value << YAML::BeginMap;
  for (const auto& [c, v] : m.throughput) e << YAML::Key << op_class_name(c) << YAML::Value << format_double(v);
  e << YAML::EndMap;
  e << YAML::Key << "memory hierarchy" << YAML::Value << YAML::BeginSeq;
  for (const auto& c : m.caches) {
    e << YAML::BeginMap;
    e << YAML::Key << "level" << YAML::Value << c.name;
    e << YAML::Key << "size" << YAML::Value << c.capacity;
    e << YAML::Key << "shared" << YAML::Value << (c.shared ? "true" : "false");
    if (c.cycles_per_cl > 0) e << YAML::Key << "cycles per cacheline" << YAML::Value << format_double(c.cycles_per_cl);
    e << YAML::Key << "penalty" << YAML::Value << format_double(c.penalty);
    e << YAML::Key << "overlapping" << YAML::Value << (c.overlapping ? "true" : "false");
    e << YAML::EndMap;
  }
  e << YAML::EndSeq;
  e << YAML::Key << "benchmarks" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "bandwidth" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (double v : m.bandwidth) e << format_double(v);
  e << YAML::EndSeq;
  if (!m.barrier_samples.empty()) {
    e << YAML::Key << "barrier" << YAML::Value << YAML::BeginSeq;
    for (const auto& [t, s] : m.barrier_samples) e << YAML::Flow << YAML::BeginSeq << t << format_double(s) << YAML::EndSeq;
    e << YAML::EndSeq;
  }
  e << YAML::EndMap << YAML::EndMap;
  return detail::yaml_str(e);
}

// 64-bit FNV-1a over the canonical serialization; any model-relevant edit to
// a machine document changes it.
inline std::string machine_fingerprint(const MachineModel& m) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : serialize_machine(m)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Kernel template

namespace detail {

inline DataStruct parse_datastruct(std::string_view text) {
  // "double F[s][n]" or "double h"
  auto toks = split_ws(text.substr(0, text.find('[')));
  if (toks.size() != 2 || !is_identifier(toks[1]))
    throw ParseError("datastruct '" + std::string(text) + "' must read '<type> <name>[dim]...'");
  DataStruct d{toks[0], toks[1], {}};
  auto br = text.find('[');
  if (br != std::string_view::npos) {
    Expr acc = parse_expr(std::string(toks[1]) + std::string(text.substr(br)));
    if (acc.kind != Expr::Kind::access) throw ParseError("datastruct '" + std::string(text) + "' is malformed");
    d.dims = acc.args;
  }
  for (const auto& dim : d.dims) {
    visit(dim, [&](const Expr& e) {
      if (e.kind == Expr::Kind::ident && e.name != "s" && e.name != "n")
        throw ParseError("datastruct " + d.name + ": dimension may only use s and n, found '" + e.name + "'");
      if (e.kind == Expr::Kind::access || e.kind == Expr::Kind::call || e.kind == Expr::Kind::input ||
          e.kind == Expr::Kind::rhs)
        throw ParseError("datastruct " + d.name + ": unsupported dimension '" + to_string(dim) + "'");
    });
  }
  return d;
}

inline void check_working_set(const Expr& ws, std::string_view kernel) {
  for (int s = 1; s <= 8; ++s) {
    double prev = -1e300;
    for (int n = 1; n <= 256; ++n) {
      double v = 0.0;
      try {
        v = eval_constant(ws, {{"s", double(s)}, {"n", double(n)}});
      } catch (const ParseError& e) {
        throw ParseError(std::string("kernel ") + std::string(kernel) + ": working set '" + to_string(ws) +
                         "': " + e.what());
      }
      if (v < prev)
        throw ParseError(std::string("kernel ") + std::string(kernel) + ": working set '" + to_string(ws) +
                         "' decreases with n");
      prev = v;
    }
  }
}

}  // namespace detail

inline KernelTemplate parse_kernel_template(std::string_view document, std::string_view default_name = "template") {
  const YAML::Node doc = detail::load_yaml(document, "kernel template");
  KernelTemplate t;
  t.name = doc["name"] ? detail::scalar(doc["name"], "name") : std::string(default_name);

  const YAML::Node ds = detail::require(doc, "datastructs", "kernel template");
  if (!ds.IsSequence()) throw ParseError("kernel template: datastructs must be a sequence");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    DataStruct d = detail::parse_datastruct(detail::scalar(ds[i], "datastruct"));
    if (t.datastruct(d.name)) throw ParseError("kernel template " + t.name + ": duplicate datastruct " + d.name);
    t.datastructs.push_back(std::move(d));
  }

  const YAML::Node comps = detail::require(doc, "computations", "kernel template");
  if (!comps.IsMap()) throw ParseError("kernel template: computations must be a mapping");
  for (auto it = comps.begin(); it != comps.end(); ++it) {
    Computation c{it->first.Scalar(), parse_statement(detail::scalar(it->second, "computation"))};
    if (t.computation(c.id)) throw ParseError("kernel template " + t.name + ": duplicate computation id " + c.id);
    t.computations.push_back(std::move(c));
  }

  const YAML::Node vars = detail::require(doc, "variants", "kernel template");
  if (!vars.IsSequence() || vars.size() == 0) throw ParseError("kernel template " + t.name + ": no variants");
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const YAML::Node v = vars[i];
    KernelVariantDef def;
    def.name = detail::scalar(detail::require(v, "name", "kernel variant"), "name");
    if (t.variant(def.name)) throw ParseError("kernel template " + t.name + ": duplicate variant " + def.name);
    def.code = parse_code_block(detail::scalar(detail::require(v, "code", "kernel variant"), "code"),
                                BlockContext::kernel);
    walk(def.code, [&](const CodeNode& n) {
      if (n.kind != CodeNode::Kind::comp) return;
      const Computation* c = t.computation(n.ref);
      if (!c) throw ParseError("kernel variant " + def.name + ": %COMP references unknown computation " + n.ref);
      def.contains_rhs = def.contains_rhs || contains_kind(c->stmt.value, Expr::Kind::rhs);
    });
    def.working_sets = detail::expression_list(detail::require(v, "working sets", "kernel variant"), "working sets");
    if (def.working_sets.empty()) throw ParseError("kernel variant " + def.name + ": empty working sets");
    for (const auto& ws : def.working_sets) detail::check_working_set(ws, def.name);
    t.variants.push_back(std::move(def));
  }
  return t;
}

inline std::string serialize_kernel_template(const KernelTemplate& t) {
  YAML::Emitter e;
  e << YAML::BeginMap;
  e << YAML::Key << "name" << YAML::Value << t.name;
  e << YAML::Key << "datastructs" << YAML::Value << YAML::BeginSeq;
  for (const auto& d : t.datastructs) {
    std::string s = d.type + " " + d.name;
    for (const auto& dim : d.dims) s += "[" + to_string(dim, true) + "]";
    e << s;
  }
  e << YAML::EndSeq;
  e << YAML::Key << "computations" << YAML::Value << YAML::BeginMap;
  for (const auto& c : t.computations)
    e << YAML::Key << c.id << YAML::Value << YAML::DoubleQuoted << (to_string(c.stmt.target, true) + " = " + to_string(c.stmt.value));
  e << YAML::EndMap;
  e << YAML::Key << "variants" << YAML::Value << YAML::BeginSeq;
  for (const auto& v : t.variants) {
    e << YAML::BeginMap;
    e << YAML::Key << "name" << YAML::Value << v.name;
    e << YAML::Key << "code" << YAML::Value << YAML::Literal << to_string(v.code);
    e << YAML::Key << "working sets" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (const auto& ws : v.working_sets) e << YAML::DoubleQuoted << to_string(ws, true);
    e << YAML::EndSeq << YAML::EndMap;
  }
  e << YAML::EndSeq << YAML::EndMap;
  return detail::yaml_str(e);
}

// ---------------------------------------------------------------------------
// Implementation skeleton

inline ImplSkeleton parse_skeleton(std::string_view document, std::string_view default_name = "skeleton") {
  const YAML::Node doc = detail::load_yaml(document, "skeleton");
  ImplSkeleton sk;
  sk.name = doc["name"] ? detail::scalar(doc["name"], "name") : std::string(default_name);
  sk.code = parse_code_block(detail::scalar(detail::require(doc, "code", "skeleton"), "code"), BlockContext::skeleton);
  walk(sk.code, [&](const CodeNode& n) {
    if (n.kind == CodeNode::Kind::comm && n.ref != kBarrier)
      throw ParseError("skeleton " + sk.name + ": unknown communication operation '" + n.ref + "'");
    if (n.kind == CodeNode::Kind::kernel &&
        std::find(sk.required_templates.begin(), sk.required_templates.end(), n.ref) == sk.required_templates.end())
      sk.required_templates.push_back(n.ref);
  });
  return sk;
}

inline std::string serialize_skeleton(const ImplSkeleton& sk) {
  YAML::Emitter e;
  e << YAML::BeginMap;
  e << YAML::Key << "name" << YAML::Value << sk.name;
  e << YAML::Key << "code" << YAML::Value << YAML::Literal << to_string(sk.code);
  e << YAML::EndMap;
  return detail::yaml_str(e);
}

// ---------------------------------------------------------------------------
// Scenario

inline ValidatedScenario validate_scenario(const TuningScenario& s) {
  ValidatedScenario v;
  static_cast<TuningScenario&>(v) = s;

  std::set<std::string> names;
  for (const auto& t : s.templates)
    if (!names.insert(t.name).second) throw ParseError("scenario: duplicate kernel template " + t.name);
  std::set<std::string> used;
  std::set<std::string> skel_names;
  for (const auto& sk : s.skeletons) {
    if (!skel_names.insert(sk.name).second) throw ParseError("scenario: duplicate skeleton " + sk.name);
    for (const auto& r : sk.required_templates) {
      if (!names.count(r))
        throw ParseError("scenario: skeleton " + sk.name + " references missing kernel template " + r);
      used.insert(r);
    }
  }
  for (const auto& t : s.templates)
    if (!used.count(t.name)) throw ParseError("scenario: kernel template " + t.name + " is not used by any skeleton");

  if (s.methods.empty()) throw ParseError("scenario: no ODE method");
  if (s.ivps.empty()) throw ParseError("scenario: no IVP");
  if (s.cores.empty()) throw ParseError("scenario: no core counts");
  for (int tau : s.cores)
    if (tau < 1 || tau > s.machine.cores)
      throw ParseError("scenario: core count " + std::to_string(tau) + " outside [1, " +
                       std::to_string(s.machine.cores) + "]");
  if (!(s.deviation >= 0)) throw ParseError("scenario: deviation must be non-negative");
  if (s.n && s.n_max) throw ParseError("scenario: give either a fixed n or n_max, not both");
  bool ivp_fixed = std::all_of(s.ivps.begin(), s.ivps.end(), [](const IVP& i) { return i.n.has_value(); });
  if (!s.n && !s.n_max && !ivp_fixed) throw ParseError("scenario: neither n nor n_max given");
  for (const auto& ivp : s.ivps) {
    std::int64_t lo = ivp.n_min;
    if (s.n && *s.n < lo) throw ParseError("scenario: n below the smallest size of IVP " + ivp.name);
    if (s.n_max && *s.n_max < lo) throw ParseError("scenario: n_max below the smallest size of IVP " + ivp.name);
  }
  std::sort(v.cores.begin(), v.cores.end());
  v.cores.erase(std::unique(v.cores.begin(), v.cores.end()), v.cores.end());
  return v;
}

}  // namespace pirktune
