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

#include <unistd.h>

#include <filesystem>

#include "pirktune/tune.hpp"
#include "support.hpp"

using namespace pirktune;
namespace t = pirktune::test;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("pirktune-tune-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST(Tune, FixedSizeCorpus) {
  auto sc = t::corpus_scenario("hsw", "ic", 161);
  PredictionStore store;
  auto res = run_tune(sc, store);
  ASSERT_EQ(res.runs.size(), 1u);
  const auto& run = res.runs[0];
  EXPECT_EQ(run.variants.size(), 56u);
  EXPECT_EQ(run.kernels.size(), 17u);
  EXPECT_EQ(res.computed_kernels.size(), 17u);
  // The six right-hand-side kernels are predicted per IVP component (IC has two).
  EXPECT_EQ(res.kernels_computed, 17u + 6u);
  EXPECT_EQ(res.ecm_evaluations, 23u);
  ASSERT_EQ(run.points.size(), 1u);
  const auto& pt = run.points[0];
  EXPECT_EQ(pt.predictions.size(), 56u);
  EXPECT_EQ(pt.selection.ranking.size(), 56u);
  EXPECT_GE(pt.selection.lambda_size, 1u);
  for (std::size_t i = 1; i < pt.selection.ranking.size(); ++i)
    EXPECT_LE(pt.selection.ranking[i - 1].theta, pt.selection.ranking[i].theta);
}

TEST(Tune, ThetaCountsKernelExecutions) {
  auto sc = t::corpus_scenario("hsw", "ic", 161);
  PredictionStore store;
  auto res = run_tune(sc, store);
  const auto& pt = res.runs[0].points[0];
  auto phi = [&](const std::string& kernel) {
    double s = 0;
    for (const auto& k : pt.kernels)
      if (k.kernel == kernel) s += k.prediction.phi;
    return s;
  };
  for (const auto& vp : pt.predictions) {
    if (vp.variant != "A_LCjli_APRXji") continue;
    // A: m x (RHS + LC) + RHS + APRX + UPD with m = 6, 14 barriers.
    double expect = 7 * phi("RHS") + 6 * phi("LC_jli") + phi("APRX_ji") + phi("UPD");
    EXPECT_NEAR(vp.theta - vp.t_com, expect, 1e-15 * expect);
    EXPECT_EQ(vp.barriers, 14);
    EXPECT_DOUBLE_EQ(vp.t_com, 14 * res.runs[0].comm.cost(1));
  }
}

TEST(Tune, WarmRunReusesEverything) {
  TempDir d("warm");
  auto sc = t::corpus_scenario("hsw", "ic", 161);
  sc.cores = {1, 8};
  std::string cold_text, cold_json;
  {
    PredictionStore store(d.path / "db.json");
    auto res = run_tune(sc, store, {d.path / "out1"});
    EXPECT_GT(res.ecm_evaluations, 0u);
    cold_text = res.report_text;
    cold_json = res.report_json;
  }
  PredictionStore store(d.path / "db.json");
  auto res = run_tune(sc, store, {d.path / "out2"});
  EXPECT_EQ(res.ecm_evaluations, 0u);
  EXPECT_EQ(res.kernels_computed, 0u);
  EXPECT_EQ(res.report_text, cold_text);
  EXPECT_EQ(res.report_json, cold_json);
  EXPECT_EQ(t::read(d.path / "out1" / "report.json"), t::read(d.path / "out2" / "report.json"));
}

TEST(Tune, IvpSwitchRecomputesSixKernels) {
  PredictionStore store;
  run_tune(t::corpus_scenario("hsw", "ic", 161), store);
  auto res = run_tune(t::corpus_scenario("hsw", "wave1d", 161), store);
  EXPECT_EQ(res.computed_kernels, (std::set<std::string>{"RHS", "RHSLC", "RHSAPRX_ij", "RHSAPRX_ji",
                                                         "RHSAPRXUPD_ij", "RHSAPRXUPD_ji"}));
  EXPECT_EQ(res.kernels_reused, 11u);
}

TEST(Tune, MachineEditInvalidatesPredictions) {
  PredictionStore store;
  auto sc = t::corpus_scenario("hsw", "ic", 161);
  run_tune(sc, store);
  sc.machine.caches[1].penalty += 1;
  auto res = run_tune(sc, store);
  EXPECT_EQ(res.computed_kernels.size(), 17u);
}

TEST(Tune, WritesSelectedVariantsAndKernels) {
  TempDir d("files");
  auto sc = t::corpus_scenario("hsw", "ic", 161);
  PredictionStore store;
  auto res = run_tune(sc, store, {d.path});
  const auto& pt = res.runs[0].points[0];
  EXPECT_EQ(pt.files.size(), pt.selection.lambda_size);
  for (const auto& f : pt.files) EXPECT_TRUE(std::filesystem::exists(d.path / f)) << f;
  EXPECT_EQ(res.runs[0].kernel_files.size(), 23u);
  EXPECT_TRUE(std::filesystem::exists(d.path / "kernels" / "APRX_ji_RadauIIA7_none_161.c"));
  EXPECT_TRUE(std::filesystem::exists(d.path / "kernels" / "RHS_RadauIIA7_IC-c1_161.c"));
  EXPECT_TRUE(std::filesystem::exists(d.path / "report.txt"));
}

TEST(Tune, DeterministicAcrossColdRuns) {
  auto sc = t::corpus_scenario("sky", "medakzo", 400);
  PredictionStore a, b;
  EXPECT_EQ(run_tune(sc, a).report_json, run_tune(sc, b).report_json);
}

TEST(Tune, SampledSizes) {
  TuningScenario raw = t::raw_scenario("toy", "ic", std::nullopt);
  raw.n_max = 100000;
  raw.cores = {1, 4};
  auto sc = validate_scenario(raw);
  PredictionStore store;
  auto res = run_tune(sc, store);
  const auto& run = res.runs[0];
  ASSERT_EQ(run.samples.size(), 2u);
  // The APRX cut point at 818 and IC's smallest size 2 give the midpoint 410.
  const auto& s1 = run.samples.at(1);
  EXPECT_EQ(sc.ivps[0].n_min, 2);
  EXPECT_TRUE(std::find(s1.begin(), s1.end(), (2 + 818) / 2) != s1.end());
  for (const auto& pt : run.points) {
    EXPECT_EQ(pt.predictions.size(), 56u);
    for (const auto& k : pt.kernels) EXPECT_EQ(k.prediction.n, pt.n);
  }
  // The shared L3 splits among cores, so four cores see earlier cut points.
  EXPECT_NE(run.samples.at(1), run.samples.at(4));
  // Warm rerun: no ECM evaluations.
  auto warm = run_tune(sc, store);
  EXPECT_EQ(warm.ecm_evaluations, 0u);
  EXPECT_EQ(warm.report_json, res.report_json);
}

TEST(Tune, BarrierSamplesOverride) {
  auto sc = t::corpus_scenario("hsw", "ic", 161);
  PredictionStore store;
  TuneOptions opts;
  opts.barrier_samples = {{1, 1e-6}, {2, 2e-6}};
  auto res = run_tune(sc, store, opts);
  EXPECT_NEAR(res.runs[0].comm.b, 1e-6, 1e-18);
  EXPECT_NEAR(res.runs[0].points[0].barrier_cost, 1e-6, 1e-18);
}
