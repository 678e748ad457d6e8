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

// Runtime predictions for kernels and variants, barrier cost regression,
// ranking with deviation-bounded selection, and the tuning-strategy metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pirktune/error.hpp"

namespace pirktune {

struct KernelPrediction {
  std::string kernel;
  int tau = 1;
  std::int64_t n = 0;
  double alpha = 0;  // cycles per cache line
  double beta = 0;   // iterations
  double delta = 0;  // elements per cache line
  double f = 0;      // Hz
  double phi = 0;    // seconds

  bool operator==(const KernelPrediction&) const = default;
};

// phi = alpha * beta / (delta * f)
inline double kernel_runtime(double alpha, double beta, double delta, double f) {
  if (!(alpha > 0) || !(beta > 0) || !(delta > 0) || !(f > 0))
    throw ModelError("kernel runtime needs positive alpha, beta, delta and f");
  return alpha * beta / (delta * f);
}

inline KernelPrediction make_kernel_prediction(std::string kernel, int tau, std::int64_t n, double alpha,
                                               double beta, double delta, double f) {
  return KernelPrediction{std::move(kernel), tau, n, alpha, beta, delta, f, kernel_runtime(alpha, beta, delta, f)};
}

// Barrier cost as a straight line in the number of threads.
struct CommModel {
  double a = 0;  // seconds
  double b = 0;  // seconds per thread
  std::size_t samples = 0;
  double residual = 0;
  int tau_min = 1;
  int tau_max = 1;

  bool operator==(const CommModel&) const = default;

  // Below the fitted range the cost is clamped to the smallest fitted thread
  // count; the result is never negative.
  double cost(int tau) const {
    double t = std::max(tau, tau_min);
    return std::max(0.0, a + b * t);
  }
};

inline CommModel fit_comm_model(const std::vector<std::pair<int, double>>& samples) {
  std::set<int> distinct;
  for (const auto& s : samples) distinct.insert(s.first);
  if (distinct.size() < 2) throw ModelError("barrier regression needs samples at two or more thread counts");
  const double k = double(samples.size());
  double sx = 0, sy = 0;
  for (const auto& [x, y] : samples) {
    sx += x;
    sy += y;
  }
  const double mx = sx / k, my = sy / k;
  double sxx = 0, sxy = 0;
  for (const auto& [x, y] : samples) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  CommModel cm;
  cm.b = sxy / sxx;
  cm.a = my - cm.b * mx;
  cm.samples = samples.size();
  double rss = 0;
  for (const auto& [x, y] : samples) rss += (y - cm.a - cm.b * x) * (y - cm.a - cm.b * x);
  cm.residual = std::sqrt(rss);
  cm.tau_min = *distinct.begin();
  cm.tau_max = *distinct.rbegin();
  return cm;
}

struct VariantPrediction {
  std::string variant;
  int tau = 1;
  std::int64_t n = 0;
  double theta = 0;
  std::vector<KernelPrediction> kernels;
  double t_com = 0;
  std::int64_t barriers = 0;

  bool operator==(const VariantPrediction&) const = default;
};

// theta = sum(phi) + barriers * cost(tau)
inline VariantPrediction variant_prediction(std::string variant, const std::vector<KernelPrediction>& kernels,
                                            std::int64_t barriers, const CommModel& cm, int tau, std::int64_t n) {
  for (const auto& k : kernels)
    if (k.tau != tau || k.n != n)
      throw ModelError("variant " + variant + ": kernel " + k.kernel + " predicted for a different tau or n");
  VariantPrediction v;
  v.variant = std::move(variant);
  v.tau = tau;
  v.n = n;
  v.kernels = kernels;
  v.barriers = barriers;
  v.t_com = double(barriers) * cm.cost(tau);
  double sum = 0;
  for (const auto& k : kernels) sum += k.phi;
  v.theta = sum + v.t_com;
  return v;
}

struct RankedVariant {
  std::string variant;
  double theta = 0;
  bool operator==(const RankedVariant&) const = default;
};

struct Selection {
  std::vector<RankedVariant> ranking;  // ascending theta, ties by id
  double deviation = 0;                // percent
  std::size_t lambda_size = 0;         // Lambda is ranking[0, lambda_size)

  std::vector<std::string> lambda() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < lambda_size; ++i) out.push_back(ranking[i].variant);
    return out;
  }
  bool in_lambda(const std::string& v) const {
    for (std::size_t i = 0; i < lambda_size; ++i)
      if (ranking[i].variant == v) return true;
    return false;
  }
};

inline Selection rank_and_select(std::vector<RankedVariant> preds, double deviation) {
  if (preds.empty()) throw ModelError("ranking needs at least one variant prediction");
  if (!(deviation >= 0)) throw ModelError("deviation must be non-negative");
  std::sort(preds.begin(), preds.end(), [](const RankedVariant& x, const RankedVariant& y) {
    return x.theta != y.theta ? x.theta < y.theta : x.variant < y.variant;
  });
  Selection s;
  s.deviation = deviation;
  const double bound = preds.front().theta * (1.0 + deviation / 100.0);
  while (s.lambda_size < preds.size() && preds[s.lambda_size].theta <= bound) ++s.lambda_size;
  s.ranking = std::move(preds);
  return s;
}

inline Selection rank_and_select(const std::vector<VariantPrediction>& preds, double deviation) {
  if (preds.empty()) throw ModelError("ranking needs at least one variant prediction");
  std::vector<RankedVariant> r;
  for (const auto& p : preds) {
    if (p.tau != preds.front().tau || p.n != preds.front().n)
      throw ModelError("ranking mixes predictions for different tau or n");
    r.push_back({p.variant, p.theta});
  }
  return rank_and_select(std::move(r), deviation);
}

// ---------------------------------------------------------------------------
// Strategy metrics

// (sum of t over Lambda - |Lambda| t_best) / (|Lambda| t_best) * 100
inline double tuning_overhead(const std::vector<double>& lambda_times, double t_best) {
  if (lambda_times.empty()) throw MeasurementError("tuning overhead needs a non-empty selection");
  if (!(t_best > 0)) throw MeasurementError("tuning overhead needs a positive best runtime");
  for (double t : lambda_times)
    if (!(t > 0)) throw MeasurementError("runtimes must be positive");
  const double k = double(lambda_times.size());
  const double sum = std::accumulate(lambda_times.begin(), lambda_times.end(), 0.0);
  return (sum - k * t_best) / (k * t_best) * 100.0;
}

// (t_RA - t_AT) / t_RA * 100
inline double performance_gain(double t_ra, double t_at) {
  if (!(t_ra > 0)) throw MeasurementError("performance gain needs a positive RunAll time");
  return (t_ra - t_at) / t_ra * 100.0;
}

// Time of a strategy that tests the variants of `tested` once each and then
// runs the fastest of them for the remaining N - |tested| steps.
inline double autotuning_time(const std::vector<double>& tested, std::size_t total) {
  if (tested.empty()) throw MeasurementError("no variants tested");
  const double sum = std::accumulate(tested.begin(), tested.end(), 0.0);
  const double best = *std::min_element(tested.begin(), tested.end());
  const double extra = total > tested.size() ? double(total - tested.size()) : 0.0;
  return sum + extra * best;
}

enum class StrategyKind { best_variant, run_all, preselect, random_select };

struct Strategy {
  StrategyKind kind = StrategyKind::run_all;
  double deviation = 5;  // preselect
  std::size_t k = 20;    // random_select

  std::string name() const {
    switch (kind) {
      case StrategyKind::best_variant: return "BestVariant";
      case StrategyKind::run_all: return "RunAll";
      case StrategyKind::preselect: {
        std::ostringstream s;
        s << "Preselect" << deviation;
        return s.str();
      }
      case StrategyKind::random_select: return "RandomSelect" + std::to_string(k);
    }
    return "?";
  }
};

struct StrategyOutcome {
  std::string strategy;
  std::string chosen;
  double t_step = 0;     // measured runtime of the chosen variant
  double t_at = 0;       // total time over N steps including testing
  std::size_t tested = 0;
  std::vector<std::string> tested_variants;

  bool operator==(const StrategyOutcome&) const = default;
};

namespace detail {

inline double measured(const std::map<std::string, double>& m, const std::string& v) {
  auto it = m.find(v);
  if (it == m.end()) throw MeasurementError("no measurement for variant " + v);
  if (!(it->second > 0)) throw MeasurementError("non-positive measurement for variant " + v);
  return it->second;
}

// k distinct indices out of [0, n) from a seeded 64-bit Mersenne Twister;
// partial Fisher-Yates with rejection sampling so the draw does not depend on
// the standard library's distribution implementation.
inline std::vector<std::size_t> draw_without_replacement(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) {
    const std::uint64_t range = n - i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t r = rng();
    while (r >= limit) r = rng();
    std::swap(idx[i], idx[i + r % range]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace detail

// Simulates one tuning strategy over the measured runtimes of all N
// enumerated variants (`variants`, in enumeration order).
inline StrategyOutcome run_strategy(const Strategy& st, const std::vector<std::string>& variants,
                                    const std::map<std::string, double>& measured, const Selection* selection,
                                    std::uint64_t seed) {
  if (variants.empty()) throw MeasurementError("no variants to evaluate");
  const std::size_t total = variants.size();
  StrategyOutcome o;
  o.strategy = st.name();
  std::vector<std::string> tested;
  switch (st.kind) {
    case StrategyKind::best_variant:
    case StrategyKind::run_all: tested = variants; break;
    case StrategyKind::preselect: {
      if (!selection) throw MeasurementError("preselect strategy needs a predicted ranking");
      const double bound = selection->ranking.front().theta * (1.0 + st.deviation / 100.0);
      for (const auto& r : selection->ranking)
        if (r.theta <= bound) tested.push_back(r.variant);
      break;
    }
    case StrategyKind::random_select:
      for (std::size_t i : detail::draw_without_replacement(total, st.k, seed)) tested.push_back(variants[i]);
      break;
  }
  std::vector<double> times;
  for (const auto& v : tested) times.push_back(detail::measured(measured, v));
  std::size_t best = 0;
  for (std::size_t i = 1; i < tested.size(); ++i)
    if (times[i] < times[best] || (times[i] == times[best] && tested[i] < tested[best])) best = i;
  o.chosen = tested[best];
  o.t_step = times[best];
  o.tested_variants = tested;
  if (st.kind == StrategyKind::best_variant) {
    o.t_at = double(total) * o.t_step;
    o.tested = 1;
    o.tested_variants = {o.chosen};
  } else if (st.kind == StrategyKind::run_all) {
    o.t_at = std::accumulate(times.begin(), times.end(), 0.0);
    o.tested = total;
  } else {
    o.t_at = autotuning_time(times, total);
    o.tested = tested.size();
  }
  return o;
}

// ---------------------------------------------------------------------------
// CSV inputs

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

inline double csv_number(const std::string& s, std::size_t line) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw MeasurementError("line " + std::to_string(line) + ": '" + s + "' is not a number");
  }
}

}  // namespace detail

struct Measurement {
  std::string variant;
  int tau = 1;
  std::int64_t n = 0;
  double seconds = 0;
};

// "variant,tau,n,seconds"
inline std::vector<Measurement> parse_measurements_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<Measurement> out;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto f = detail::split_csv(line);
    if (!header) {
      if (f != std::vector<std::string>{"variant", "tau", "n", "seconds"})
        throw MeasurementError("measurement CSV must start with the header variant,tau,n,seconds");
      header = true;
      continue;
    }
    if (f.size() != 4) throw MeasurementError("line " + std::to_string(lineno) + ": expected 4 fields");
    Measurement m{f[0], static_cast<int>(detail::csv_number(f[1], lineno)),
                  static_cast<std::int64_t>(detail::csv_number(f[2], lineno)), detail::csv_number(f[3], lineno)};
    if (!(m.seconds > 0)) throw MeasurementError("line " + std::to_string(lineno) + ": runtime must be positive");
    out.push_back(std::move(m));
  }
  if (!header) throw MeasurementError("measurement CSV is empty");
  return out;
}

// "tau,seconds"
inline std::vector<std::pair<int, double>> parse_barrier_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::pair<int, double>> out;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto f = detail::split_csv(line);
    if (!header) {
      if (f != std::vector<std::string>{"tau", "seconds"})
        throw MeasurementError("barrier CSV must start with the header tau,seconds");
      header = true;
      continue;
    }
    if (f.size() != 2) throw MeasurementError("line " + std::to_string(lineno) + ": expected 2 fields");
    out.emplace_back(static_cast<int>(detail::csv_number(f[0], lineno)), detail::csv_number(f[1], lineno));
  }
  return out;
}

}  // namespace pirktune
