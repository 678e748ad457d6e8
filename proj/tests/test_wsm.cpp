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

#include <gtest/gtest.h>

#include "pirktune/wsm.hpp"
#include "support.hpp"

using namespace pirktune;
namespace t = pirktune::test;

namespace {

// Largest n fitting by plain scan, or 0.
std::int64_t scan_fit(const std::string& ws, int s, std::int64_t capacity, std::int64_t limit) {
  Expr e = parse_expr(ws);
  std::int64_t best = 0;
  for (std::int64_t n = 1; n <= limit; ++n) {
    double v = std::ceil(eval_constant(e, {{"s", double(s)}, {"n", double(n)}}));
    if (v * 8 <= double(capacity)) best = n;
  }
  return best;
}

}  // namespace

TEST(WorkingSet, Evaluate) {
  EXPECT_EQ(eval_ws(parse_expr("(s+1)*n+s"), 4, 1000), 5004);
  EXPECT_EQ(eval_ws(parse_expr("2*n"), 4, 7), 14);
  EXPECT_EQ(eval_ws(parse_expr("n/3"), 4, 7), 3);
  EXPECT_THROW(eval_ws(parse_expr("n-s"), 4, 2), ModelError);
}

TEST(WorkingSet, CutPointsMatchLinearScan) {
  EXPECT_EQ(max_fitting_n(parse_expr("(s+1)*n+s"), 4, 32768), 818);
  EXPECT_EQ(max_fitting_n(parse_expr("2*n"), 4, 32768), 2048);
  EXPECT_EQ(scan_fit("(s+1)*n+s", 4, 32768, 5000), 818);
  EXPECT_EQ(scan_fit("2*n", 4, 32768, 5000), 2048);
  for (const char* ws : {"(s+1)*n+s", "2*n", "s*n + 3*n", "n*n", "n/2 + s"})
    for (int s : {1, 2, 4, 8})
      for (std::int64_t cap : {4096, 32768, 262144}) {
        auto fit = max_fitting_n(parse_expr(ws), s, cap);
        EXPECT_EQ(fit.value_or(0), scan_fit(ws, s, cap, 70000)) << ws << " s=" << s << " cap=" << cap;
      }
}

TEST(WorkingSet, ConstantExpressionHasNoCuts) {
  EXPECT_FALSE(max_fitting_n(parse_expr("s"), 4, 32768));
  EXPECT_TRUE(cache_cutpoints({parse_expr("s")}, 4, t::machine("toy")).empty());
}

TEST(WorkingSet, SharedLevelSplitAmongCores) {
  MachineModel m = t::machine("toy");
  EXPECT_EQ(effective_capacity(m, 2, 1), 2 * 1024 * 1024);
  EXPECT_EQ(effective_capacity(m, 2, 4), 512 * 1024);
  EXPECT_EQ(effective_capacity(m, 0, 4), 32768);
}

TEST(Sampling, Midpoints) {
  EXPECT_EQ(sample_sizes({818, 2048}, 1, 10000), (std::vector<std::int64_t>{409, 1433, 6024}));
  EXPECT_EQ(sample_sizes({}, 10, 21), (std::vector<std::int64_t>{15}));
  EXPECT_EQ(sample_sizes({818, 2048}, 1, 500), (std::vector<std::int64_t>{250}));
  EXPECT_THROW(sample_sizes({}, 10, 5), ModelError);
}

TEST(Sampling, RangeIndexAgreesWithSampling) {
  std::vector<std::int64_t> cuts{818, 2048, 16384};
  auto samples = sample_sizes(cuts, 1, 100000);
  ASSERT_EQ(samples.size(), 4u);
  for (std::size_t r = 0; r < samples.size(); ++r) EXPECT_EQ(range_index(cuts, 1, samples[r]), r);
  EXPECT_EQ(range_index(cuts, 1, 818), 0u);
  EXPECT_EQ(range_index(cuts, 1, 819), 1u);
}

TEST(Residency, ConstantWithinRangesAndChangesAtCuts) {
  auto ts = t::templates();
  MachineModel m = t::machine("toy");
  ODEMethod meth = t::method("radau_iia7");
  const auto& ap = find_template(ts, "APRX");
  GeneratedKernel sym = specialize_kernel(ap, *ap.variant("APRX_ji"), meth, nullptr, std::nullopt, std::nullopt);
  auto cuts = kernel_cutpoints(sym, m);
  ASSERT_FALSE(cuts.empty());
  EXPECT_EQ(cuts.front(), 818);
  auto residency_at = [&](std::int64_t n) {
    return array_residency(specialize_kernel(ap, *ap.variant("APRX_ji"), meth, nullptr, std::nullopt, n), m, n);
  };
  std::int64_t lo = 1;
  for (std::int64_t c : cuts) {
    auto inside = residency_at(lo);
    for (std::int64_t n : {lo, (lo + c) / 2, c}) EXPECT_EQ(residency_at(n), inside) << n;
    EXPECT_NE(residency_at(c + 1), residency_at(c)) << "cut " << c;
    lo = c + 1;
  }
}

TEST(Residency, CoefficientArraysStayInL1) {
  auto ts = t::templates();
  MachineModel m = t::machine("toy");
  const auto& lc = find_template(ts, "LC");
  auto g = specialize_kernel(lc, *lc.variant("LC_lij"), t::method("radau_iia7"), nullptr, std::nullopt, 100000);
  auto r = array_residency(g, m, 100000);
  EXPECT_EQ(r.at("A"), 0u);
  EXPECT_EQ(r.at("F"), m.caches.size());
}
