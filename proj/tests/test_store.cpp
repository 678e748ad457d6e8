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

#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>

#include "pirktune/store.hpp"
#include "support.hpp"

using namespace pirktune;
namespace t = pirktune::test;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("pirktune-store-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

PredictionKey key(std::string kernel, std::int64_t n = 161) {
  return PredictionKey{std::move(kernel), -1, "fp", "RadauIIA7", kNoIvp, 1, n, 2.3e9};
}

KernelPrediction pred(double phi) { return KernelPrediction{"K", 1, 161, 4, 161, 8, 2.3e9, phi}; }

}  // namespace

TEST(Store, PutGetOverwrite) {
  PredictionStore s;
  EXPECT_FALSE(s.get(key("K")));
  s.put(key("K"), pred(1e-6));
  EXPECT_EQ(s.get(key("K")), pred(1e-6));
  s.put(key("K"), pred(2e-6));
  EXPECT_EQ(s.get(key("K"))->phi, 2e-6);
  EXPECT_EQ(s.size(), 1u);
}

TEST(Store, PersistsExactDoubles) {
  TempDir d;
  auto path = d.path / "db.json";
  const double phi = 1.0 / 3.0 * 1e-5;
  {
    PredictionStore s(path);
    s.put(key("K"), pred(phi));
    s.put_comm("fp", CommModel{1e-7, 2e-7, 4, 0.1, 1, 8});
    s.flush();
  }
  PredictionStore s(path);
  EXPECT_EQ(s.get(key("K")), pred(phi));
  EXPECT_EQ(s.get_comm("fp"), (CommModel{1e-7, 2e-7, 4, 0.1, 1, 8}));
  EXPECT_FALSE(s.get(key("K", 162)));
}

TEST(Store, MergesConcurrentWriters) {
  TempDir d;
  auto path = d.path / "db.json";
  PredictionStore a(path), b(path);
  a.put(key("A"), pred(1));
  b.put(key("B"), pred(2));
  a.flush();
  b.flush();
  PredictionStore c(path);
  EXPECT_TRUE(c.get(key("A")));
  EXPECT_TRUE(c.get(key("B")));
}

TEST(Store, ParallelProcessesKeepAllRecords) {
  TempDir d;
  auto path = d.path / "db.json";
  std::vector<pid_t> kids;
  for (int p = 0; p < 4; ++p) {
    pid_t pid = ::fork();
    if (pid == 0) {
      for (int i = 0; i < 10; ++i) {
        PredictionStore s(path);
        s.put(key("P" + std::to_string(p), i), pred(i));
        s.flush();
      }
      ::_exit(0);
    }
    kids.push_back(pid);
  }
  for (pid_t k : kids) {
    int status = 0;
    ::waitpid(k, &status, 0);
    EXPECT_TRUE(WIFEXITED(status) && WEXITSTATUS(status) == 0);
  }
  EXPECT_EQ(PredictionStore(path).size(), 40u);
}

TEST(Store, CorruptAndWrongSchema) {
  TempDir d;
  auto path = d.path / "db.json";
  std::ofstream(path) << "{ not json";
  EXPECT_THROW(PredictionStore{path}, StoreError);
  std::ofstream(path, std::ios::trunc) << R"({"schema_version": 99, "kernel_predictions": [], "comm_models": {}})";
  EXPECT_THROW(PredictionStore{path}, StoreError);
}

TEST(Store, NothingWrittenWithoutFlush) {
  TempDir d;
  auto path = d.path / "db.json";
  {
    PredictionStore s(path);
    s.put(key("K"), pred(1));
  }
  EXPECT_FALSE(std::filesystem::exists(path));
}

TEST(Store, ExportCsv) {
  PredictionStore s;
  EXPECT_EQ(s.export_csv(), "kernel,component,machine,method,ivp,tau,n,frequency,alpha,beta,delta,phi\n");
  s.put(key("K"), pred(0.5));
  EXPECT_EQ(s.export_csv(),
            "kernel,component,machine,method,ivp,tau,n,frequency,alpha,beta,delta,phi\n"
            "K,,fp,RadauIIA7,NONE,1,161,2.3e+09,4.0,161.0,8.0,0.5\n");
}

TEST(Store, KeyOrderIsTotal) {
  EXPECT_LT(key("A"), key("B"));
  EXPECT_LT(key("A", 1), key("A", 2));
  PredictionKey k = key("A");
  PredictionKey k2 = k;
  k2.component = 0;
  EXPECT_NE(k, k2);
}

TEST(Stale, SixRhsKernels) {
  auto ts = t::templates();
  IVP ic = t::ivp("ic"), cusp = t::ivp("cusp");
  auto stale = stale_kernels_on_ivp_change(ts, ic, cusp);
  EXPECT_EQ(stale, (std::set<std::string>{"RHS", "RHSLC", "RHSAPRX_ij", "RHSAPRX_ji", "RHSAPRXUPD_ij",
                                          "RHSAPRXUPD_ji"}));
  EXPECT_TRUE(stale_kernels_on_ivp_change(ts, ic, ic).empty());
  std::vector<KernelTemplate> plain;
  for (const auto& tm : ts)
    if (!tm.contains_rhs()) plain.push_back(tm);
  EXPECT_TRUE(stale_kernels_on_ivp_change(plain, ic, cusp).empty());
}
