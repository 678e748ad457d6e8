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

// Execution-Cache-Memory model for specialized kernels.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "pirktune/codegen.hpp"
#include "pirktune/descfmt.hpp"
#include "pirktune/error.hpp"
#include "pirktune/expr.hpp"

namespace pirktune {

// Cache-line traffic of one array per innermost iteration. A loaded line is
// counted once per stream; stores add a writeback, and write-only streams
// also pay the write-allocate load.
struct ArrayStream {
  std::string name;
  Expr elements;
  bool read = false;
  bool write = false;
  double load_cls = 0.0;
  double evict_cls = 0.0;

  double cls() const { return load_cls + evict_cls; }
  bool operator==(const ArrayStream&) const = default;
};

struct KernelCharacterization {
  double adds = 0, muls = 0, fmas = 0, divs = 0;
  double loads = 0, stores = 0;
  std::vector<ArrayStream> streams;

  bool operator==(const KernelCharacterization&) const = default;

  double count(OpClass c) const {
    switch (c) {
      case OpClass::add: return adds;
      case OpClass::mul: return muls;
      case OpClass::fma: return fmas;
      case OpClass::div: return divs;
      case OpClass::load: return loads;
      case OpClass::store: return stores;
    }
    return 0;
  }
};

namespace detail {

struct OpCount {
  double add = 0, mul = 0, fma = 0, div = 0, load = 0;
};

// Greedy fusion: an add or subtract absorbs one multiply operand.
inline void count_ops(const Expr& e, bool fuse, OpCount& c) {
  switch (e.kind) {
    case Expr::Kind::access:
      c.load += 1;
      return;
    case Expr::Kind::add:
    case Expr::Kind::sub: {
      int fused = -1;
      if (fuse) {
        if (e.args[0].kind == Expr::Kind::mul) fused = 0;
        else if (e.args[1].kind == Expr::Kind::mul) fused = 1;
      }
      if (fused >= 0) {
        c.fma += 1;
        for (int i = 0; i < 2; ++i) {
          if (i == fused) {
            count_ops(e.args[i].args[0], fuse, c);
            count_ops(e.args[i].args[1], fuse, c);
          } else {
            count_ops(e.args[i], fuse, c);
          }
        }
        return;
      }
      c.add += 1;
      break;
    }
    case Expr::Kind::mul: c.mul += 1; break;
    case Expr::Kind::div: c.div += 1; break;
    case Expr::Kind::call: c.div += 1; break;  // math library calls occupy the divide unit
    default: break;
  }
  for (const auto& a : e.args) count_ops(a, fuse, c);
}

// Stream identity: neighbouring accesses along the innermost dimension
// (x[j-1], x[j], x[j+1]) share one stream.
inline std::string stream_key(const Expr& access) {
  std::string key = access.name;
  for (std::size_t d = 0; d < access.args.size(); ++d) {
    Expr idx = access.args[d];
    if (d + 1 == access.args.size() && (idx.kind == Expr::Kind::add || idx.kind == Expr::Kind::sub) &&
        idx.args[1].is_literal())
      idx = idx.args[0];
    key += "[" + to_string(idx, true) + "]";
  }
  return key;
}

struct StreamUse {
  bool read = false, write = false;
  double weight = 0;
};

struct CharacterizeWalk {
  bool fuse;
  double beta;
  const GeneratedKernel& g;
  KernelCharacterization out;
  // (stream key, loop id) -> use within one innermost loop instance
  std::map<std::pair<std::string, int>, StreamUse> uses;
  std::map<std::string, std::string> array_of;
  int next_loop = 0;

  void check_declared(const Expr& e) {
    visit(e, [&](const Expr& x) {
      if (x.kind != Expr::Kind::access) return;
      bool ok = std::any_of(g.arrays.begin(), g.arrays.end(), [&](const DataStruct& d) { return d.name == x.name; });
      if (!ok) throw ModelError("kernel " + g.kernel + ": statement references undeclared array " + x.name);
    });
  }

  void use(const Expr& access, int loop, double w, bool write) {
    std::string key = stream_key(access);
    array_of[key] = access.name;
    auto& u = uses[{key, loop}];
    (write ? u.write : u.read) = true;
    u.weight = std::max(u.weight, w);
  }

  void walk(const std::vector<KernelNode>& block, double execs, int loop) {
    for (const auto& k : block) {
      if (k.kind == KernelNode::Kind::loop) {
        double trips = eval_constant(simplify(Expr::binary(Expr::Kind::sub, k.end, k.begin)));
        walk(k.body, execs * std::max(trips, 0.0), next_loop++);
      } else if (k.kind == KernelNode::Kind::stmt) {
        check_declared(k.stmt.target);
        check_declared(k.stmt.value);
        const double w = execs / beta;
        OpCount c;
        count_ops(k.stmt.value, fuse, c);
        out.adds += c.add * w;
        out.muls += c.mul * w;
        out.fmas += c.fma * w;
        out.divs += c.div * w;
        out.loads += c.load * w;
        visit(k.stmt.value, [&](const Expr& x) {
          if (x.kind == Expr::Kind::access) use(x, loop, w, false);
        });
        if (k.stmt.target.kind == Expr::Kind::access) {
          out.stores += w;
          use(k.stmt.target, loop, w, true);
        }
      }
    }
  }
};

}  // namespace detail

// Per-iteration operation and traffic counts of a fixed-n kernel, normalized
// by its iteration count beta.
inline KernelCharacterization characterize(const GeneratedKernel& g, bool fuse_fma) {
  if (!g.n) throw ModelError("kernel " + g.kernel + ": characterization needs a fixed n");
  const double beta = eval_constant(g.beta);
  detail::CharacterizeWalk w{fuse_fma, beta > 0 ? beta : 1.0, g, {}, {}, {}, 0};
  w.walk(g.body, 1.0, -1);
  std::map<std::string, ArrayStream> per_array;
  for (const auto& [key, u] : w.uses) {
    const std::string& name = w.array_of[key.first];
    ArrayStream& s = per_array[name];
    s.name = name;
    s.read = s.read || u.read;
    s.write = s.write || u.write;
    if (u.read || u.write) s.load_cls += u.weight;
    if (u.write) s.evict_cls += u.weight;
  }
  for (const auto& d : g.arrays) {
    auto it = per_array.find(d.name);
    if (it == per_array.end()) continue;
    auto fp = g.footprints.find(d.name);
    it->second.elements = fp != g.footprints.end() ? fp->second : Expr::lit(1.0);
    w.out.streams.push_back(it->second);
  }
  return w.out;
}

inline KernelCharacterization characterize(const GeneratedKernel& g, const MachineModel& m) {
  return characterize(g, m.has_fma());
}

struct ECMPrediction {
  double t_ol = 0;
  double t_nol = 0;
  std::vector<double> contributions;  // per level pair (L1L2, L2L3, L3Mem), cycles/CL
  std::vector<double> penalties;      // per level pair
  std::vector<bool> overlapping;      // per level pair
  std::vector<double> t_data;         // per residency level, L1 first
  std::vector<double> t_ecm;          // per residency level
  std::vector<double> pair_cls;       // cache lines crossing each pair per CL of work
  std::size_t residency = 0;          // deepest level any array lives in
  std::vector<std::string> level_names;

  bool operator==(const ECMPrediction&) const = default;
  double t_ecm_resident() const { return t_ecm.at(residency); }
  bool memory_bound() const { return residency + 1 == t_ecm.size(); }
};

inline std::atomic<std::uint64_t>& ecm_evaluation_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

// Single-core ECM prediction. `residency` maps arrays to levels (0 = L1,
// caches.size() = memory); delta is elements per cache line.
inline ECMPrediction ecm_single(const KernelCharacterization& c, const std::map<std::string, std::size_t>& residency,
                                const MachineModel& m, double delta) {
  ++ecm_evaluation_counter();
  if (!(delta > 0)) throw ModelError("ECM: elements per cache line must be positive");
  auto throughput = [&](OpClass k) {
    auto it = m.throughput.find(k);
    if (it == m.throughput.end() || !(it->second > 0))
      throw ModelError(std::string("machine ") + m.name + " has no throughput for " + op_class_name(k));
    return it->second;
  };
  ECMPrediction p;
  for (OpClass k : {OpClass::add, OpClass::mul, OpClass::fma, OpClass::div})
    if (c.count(k) > 0) p.t_ol = std::max(p.t_ol, c.count(k) * delta / throughput(k));
  if (c.loads > 0) p.t_nol = std::max(p.t_nol, c.loads * delta / throughput(OpClass::load));
  if (c.stores > 0) p.t_nol = std::max(p.t_nol, c.stores * delta / throughput(OpClass::store));

  const std::size_t pairs = m.caches.size();
  p.pair_cls.assign(pairs, 0.0);
  for (const auto& s : c.streams) {
    auto it = residency.find(s.name);
    if (it == residency.end()) throw ModelError("ECM: no residency for array " + s.name);
    for (std::size_t q = 0; q < pairs && q < it->second; ++q) p.pair_cls[q] += s.cls();
    p.residency = std::max(p.residency, std::min(it->second, pairs));
  }
  for (std::size_t q = 0; q < pairs; ++q) {
    p.contributions.push_back(p.pair_cls[q] * m.transfer_cost(q));
    p.penalties.push_back(p.pair_cls[q] * m.caches[q].penalty);
    p.overlapping.push_back(m.caches[q].overlapping);
  }
  double acc = 0.0;
  for (std::size_t level = 0; level <= pairs; ++level) {
    if (level > 0 && !p.overlapping[level - 1]) acc += p.contributions[level - 1] + p.penalties[level - 1];
    p.t_data.push_back(acc);
    p.t_ecm.push_back(std::max(p.t_ol, p.t_nol + acc));
    p.level_names.push_back(m.level_name(level));
  }
  return p;
}

// Memory-transfer cycles per CL of work when tau cores share the bandwidth.
inline double saturation_cost(const ECMPrediction& p, int tau, const MachineModel& m) {
  if (p.pair_cls.empty()) return 0.0;
  return p.pair_cls.back() * double(m.cache_line) * m.clock_hz / m.bandwidth_at(tau);
}

// Cycles per cache line with tau active cores.
inline double ecm_multicore(const ECMPrediction& p, int tau, const MachineModel& m) {
  if (tau < 1 || tau > m.cores)
    throw ModelError("core count " + std::to_string(tau) + " outside [1, " + std::to_string(m.cores) + "]");
  const double scaled = p.t_ecm_resident() / tau;
  if (!p.memory_bound()) return scaled;
  return std::max(scaled, saturation_cost(p, tau, m));
}

// "{ T_OL || T_nOL | T_L1L2 | T_L2L3 | T_L3Mem } cy/CL" and the per-level
// predictions "{ L1 \ L2 \ L3 \ Mem } cy/CL".
inline std::string format_ecm(const ECMPrediction& p) {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return std::string(buf);
  };
  std::string s = "{ " + num(p.t_ol) + " || " + num(p.t_nol);
  for (std::size_t q = 0; q < p.contributions.size(); ++q) {
    s += " | " + num(p.contributions[q] + p.penalties[q]);
    if (p.overlapping[q]) s += "*";
  }
  s += " } cy/CL  { ";
  for (std::size_t l = 0; l < p.t_ecm.size(); ++l) s += (l ? " \\ " : "") + num(p.t_ecm[l]);
  return s + " } cy/CL";
}

}  // namespace pirktune
