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

// Working-set model: element counts, cache cut points in n, sample sizes and
// per-array cache residency.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pirktune/codegen.hpp"
#include "pirktune/descfmt.hpp"
#include "pirktune/error.hpp"
#include "pirktune/expr.hpp"

namespace pirktune {

inline constexpr std::int64_t kDoubleBytes = 8;

// Element count of a working-set expression, rounded up.
inline std::int64_t eval_ws(const Expr& e, int s, std::int64_t n) {
  double v = 0.0;
  try {
    v = eval_constant(e, {{"s", double(s)}, {"n", double(n)}});
  } catch (const ParseError& err) {
    throw ModelError(std::string("working set: ") + err.what());
  }
  if (!(v > 0.0))
    throw ModelError("working set '" + to_string(e) + "' is non-positive at s=" + std::to_string(s) +
                     ", n=" + std::to_string(n));
  return static_cast<std::int64_t>(std::ceil(v));
}

// Capacity available to one core; shared levels are split among the active
// cores.
inline std::int64_t effective_capacity(const MachineModel& m, std::size_t level, int tau = 1) {
  const CacheLevel& c = m.caches.at(level);
  return c.shared && tau > 1 ? c.capacity / tau : c.capacity;
}

// Largest n with ceil(e(s, n)) * elem_bytes <= capacity, or nullopt when the
// expression does not depend on n or does not fit even at n = 1.
inline std::optional<std::int64_t> max_fitting_n(const Expr& e, int s, std::int64_t capacity,
                                                 std::int64_t elem_bytes = kDoubleBytes) {
  Expr bound = simplify(substitute_ident(e, "s", Expr::lit(s)));
  if (!mentions(bound, "n")) return std::nullopt;
  auto fits = [&](std::int64_t n) { return eval_ws(bound, s, n) * elem_bytes <= capacity; };
  if (!fits(1)) return std::nullopt;
  std::int64_t lo = 1, hi = 2;
  const std::int64_t limit = std::int64_t{1} << 40;
  while (fits(hi)) {
    lo = hi;
    if (hi >= limit) return std::nullopt;
    hi *= 2;
  }
  while (hi - lo > 1) {
    std::int64_t mid = lo + (hi - lo) / 2;
    (fits(mid) ? lo : hi) = mid;
  }
  return lo;
}

// Union over expressions and cache levels of the largest n that still fits,
// sorted and deduplicated.
inline std::vector<std::int64_t> cache_cutpoints(const std::vector<Expr>& ws, int s, const MachineModel& m,
                                                 std::int64_t elem_bytes = kDoubleBytes, int tau = 1) {
  std::vector<std::int64_t> cuts;
  for (const auto& e : ws)
    for (std::size_t l = 0; l < m.caches.size(); ++l)
      if (auto c = max_fitting_n(e, s, effective_capacity(m, l, tau), elem_bytes)) cuts.push_back(*c);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  return cuts;
}

// Ranges [n_min, c1], (c1, c2], ..., (ck, n_max]; one sample per range at the
// floor of its arithmetic midpoint.
inline std::vector<std::int64_t> sample_sizes(const std::vector<std::int64_t>& cuts, std::int64_t n_min,
                                              std::int64_t n_max) {
  if (n_min > n_max) throw ModelError("sample range is empty: n_min > n_max");
  std::vector<std::int64_t> out;
  std::int64_t lo = n_min;
  for (std::int64_t c : cuts) {
    if (c < lo) continue;
    if (c >= n_max) break;
    out.push_back(lo + (c - lo) / 2);
    lo = c + 1;
  }
  out.push_back(lo + (n_max - lo) / 2);
  return out;
}

// Index of the range containing n (ranges as in sample_sizes).
inline std::size_t range_index(const std::vector<std::int64_t>& cuts, std::int64_t n_min, std::int64_t n) {
  std::size_t idx = 0;
  for (std::int64_t c : cuts) {
    if (c < n_min) continue;
    if (n > c) ++idx;
  }
  return idx;
}

// Smallest cache level holding the working set, caches.size() for memory.
inline std::size_t ws_level(const Expr& e, int s, std::int64_t n, const MachineModel& m,
                            std::int64_t elem_bytes = kDoubleBytes, int tau = 1) {
  const std::int64_t bytes = eval_ws(e, s, n) * elem_bytes;
  for (std::size_t l = 0; l < m.caches.size(); ++l)
    if (bytes <= effective_capacity(m, l, tau)) return l;
  return m.caches.size();
}

namespace detail {

inline constexpr double kAsymptoticN = 1e9;

inline double asymptotic(const Expr& e, int s) {
  return eval_constant(e, {{"s", double(s)}, {"n", kAsymptoticN}});
}

}  // namespace detail

// Working set that governs an array: the smallest expression covering the
// array's footprint for large n, or the largest expression if none does.
inline const Expr& covering_ws(const std::vector<Expr>& ws, const Expr& footprint, int s) {
  if (ws.empty()) throw ModelError("kernel has no working-set expressions");
  const double need = detail::asymptotic(footprint, s);
  const Expr* best = nullptr;
  double best_v = 0.0;
  const Expr* largest = &ws.front();
  double largest_v = detail::asymptotic(ws.front(), s);
  for (const auto& e : ws) {
    double v = detail::asymptotic(e, s);
    if (v >= need && (!best || v < best_v)) {
      best = &e;
      best_v = v;
    }
    if (v > largest_v) {
      largest = &e;
      largest_v = v;
    }
  }
  return best ? *best : *largest;
}

// Residency level of every array of a kernel at size n. Arrays whose size
// does not depend on n stay in L1.
inline std::map<std::string, std::size_t> array_residency(const GeneratedKernel& g, const MachineModel& m,
                                                          std::int64_t n, int tau = 1,
                                                          std::int64_t elem_bytes = kDoubleBytes) {
  std::map<std::string, std::size_t> out;
  for (const auto& [name, fp] : g.footprints) {
    if (!mentions(fp, "n")) {
      out[name] = 0;
      continue;
    }
    out[name] = ws_level(covering_ws(g.working_sets, fp, g.stages), g.stages, n, m, elem_bytes, tau);
  }
  return out;
}

// Cut points of a specialized kernel's working sets.
inline std::vector<std::int64_t> kernel_cutpoints(const GeneratedKernel& g, const MachineModel& m, int tau = 1,
                                                  std::int64_t elem_bytes = kDoubleBytes) {
  return cache_cutpoints(g.working_sets, g.stages, m, elem_bytes, tau);
}

}  // namespace pirktune
