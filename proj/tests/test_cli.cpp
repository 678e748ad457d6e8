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

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "pirktune/cli.hpp"
#include "support.hpp"

using namespace pirktune;
namespace t = pirktune::test;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "pirktune");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = cli::run(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string data(const std::string& rel) { return (t::data_dir() / rel).string(); }

std::vector<std::string> docs() {
  return {"--method", data("methods/radau_iia7.yaml"), "--templates-dir", data("templates"), "--skeletons-dir",
          data("skeletons")};
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("pirktune-cli-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST(EditDistance, MatchesExhaustiveScan) {
  EXPECT_EQ(cli::edit_distance("kitten", "sitting"), 3u);
  EXPECT_EQ(cli::edit_distance("", "abc"), 3u);
  // Brute-force oracle: shortest edit script by breadth-first search over
  // strings reachable with single-character edits from a small alphabet.
  auto bfs = [](const std::string& a, const std::string& b) {
    std::set<std::string> seen{a};
    std::vector<std::string> frontier{a};
    std::string alphabet;
    for (char c : a + b)
      if (alphabet.find(c) == std::string::npos) alphabet += c;
    for (std::size_t d = 0;; ++d) {
      for (const auto& s : frontier)
        if (s == b) return d;
      std::vector<std::string> next;
      for (const auto& s : frontier) {
        std::vector<std::string> cand;
        for (std::size_t i = 0; i < s.size(); ++i) cand.push_back(s.substr(0, i) + s.substr(i + 1));
        for (std::size_t i = 0; i <= s.size(); ++i)
          for (char c : alphabet) cand.push_back(s.substr(0, i) + c + s.substr(i));
        for (std::size_t i = 0; i < s.size(); ++i)
          for (char c : alphabet) {
            std::string x = s;
            x[i] = c;
            cand.push_back(x);
          }
        for (auto& x : cand)
          if (x.size() <= 6 && seen.insert(x).second) next.push_back(x);
      }
      frontier = std::move(next);
    }
  };
  const char* words[] = {"", "ab", "ba", "abc", "acb", "bca", "aab", "cc"};
  for (const char* a : words)
    for (const char* b : words) EXPECT_EQ(cli::edit_distance(a, b), bfs(a, b)) << a << " -> " << b;
}

TEST(EditDistance, NearestMatch) {
  auto ids = enumerate_variants(t::skeletons(), t::templates());
  std::vector<std::string> names;
  for (const auto& v : ids) names.push_back(v.id);
  const std::string typo = "A_LCjli_APRXjx";
  auto near = cli::nearest_match(typo, names);
  ASSERT_TRUE(near);
  std::size_t best = 1000;
  for (const auto& n : names) best = std::min(best, cli::edit_distance(typo, n));
  EXPECT_EQ(cli::edit_distance(typo, *near), best);
  EXPECT_EQ(*near, "A_LCjli_APRXji");
}

TEST(Cli, HelpListsExitCodes) {
  auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("Exit codes"), std::string::npos);
  EXPECT_NE(r.out.find("3  parse error"), std::string::npos);
  EXPECT_NE(r.out.find("strategy-eval"), std::string::npos);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, cli::kUsageExit);
  EXPECT_EQ(run({"tune"}).code, cli::kUsageExit);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kUsageExit);
}

TEST(Cli, CodegenVariantA) {
  auto r = run(concat({"codegen", "A_LCjli_APRXji", "--ivp", data("ivps/ic.yaml"), "--n", "161"}, docs()));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("for (int k=0; k<6; ++k) { // m=6"), std::string::npos);
  EXPECT_NE(r.out.find("#pragma omp barrier"), std::string::npos);
  EXPECT_NE(r.out.find("for (int j=0; j<161; ++j)"), std::string::npos);
  EXPECT_EQ(run(concat({"codegen", "A_LCjli_APRXji", "--ivp", data("ivps/ic.yaml"), "--n", "161"}, docs())).out, r.out);
}

TEST(Cli, CodegenWritesFile) {
  TempDir d("cg");
  auto r = run(concat({"codegen", "C_APRXji", "--n", "64", "--ivp", data("ivps/ic.yaml"), "--out-dir", d.path.string()},
                      docs()));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(d.path / "C_APRXji.c"));
}

TEST(Cli, CodegenUnknownVariantSuggests) {
  auto r = run(concat({"codegen", "A_LCjli_APRXjx", "--n", "161"}, docs()));
  EXPECT_EQ(r.code, exit_code(Stage::codegen));
  EXPECT_NE(r.err.find("did you mean 'A_LCjli_APRXji'"), std::string::npos) << r.err;
}

TEST(Cli, TuneThenWarmThenExport) {
  TempDir d("tune");
  auto args = concat({"tune", "--machine", data("machines/hsw.yaml"), "--ivp", data("ivps/ic.yaml"), "--n", "161",
                      "--cores", "1,8", "--store", (d.path / "db.json").string(), "--out-dir",
                      (d.path / "out").string()},
                     docs());
  auto cold = run(args);
  ASSERT_EQ(cold.code, 0) << cold.err;
  EXPECT_NE(cold.out.find("kernel predictions computed: 17 kernels"), std::string::npos) << cold.out;
  const std::string report = t::read(d.path / "out" / "report.json");
  auto warm = run(args);
  ASSERT_EQ(warm.code, 0);
  EXPECT_NE(warm.out.find("ECM evaluations: 0"), std::string::npos);
  EXPECT_EQ(t::read(d.path / "out" / "report.json"), report);

  auto exp = run({"db", "export", "--store", (d.path / "db.json").string()});
  ASSERT_EQ(exp.code, 0);
  EXPECT_EQ(std::count(exp.out.begin(), exp.out.end(), '\n'), 1 + 2 * 23);

  // Strategy evaluation against the predicted ranking.
  std::string csv = "variant,tau,n,seconds\n";
  auto variants = enumerate_variants(t::skeletons(), t::templates());
  for (std::size_t i = 0; i < variants.size(); ++i)
    csv += variants[i].id + ",8,161," + format_double(1e-4 * (1.0 + 0.01 * double((i * 37) % 56))) + "\n";
  std::ofstream(d.path / "m.csv") << csv;
  auto se = run({"strategy-eval", "--measurements", (d.path / "m.csv").string(), "--selection",
                 (d.path / "out" / "report.json").string(), "--seed", "3"});
  ASSERT_EQ(se.code, 0) << se.err;
  for (const char* s : {"BestVariant", "RunAll", "Preselect5", "Preselect10", "RandomSelect20"})
    EXPECT_NE(se.out.find(s), std::string::npos) << s;
}

TEST(Cli, StoreFromEnvironment) {
  TempDir d("env");
  auto path = (d.path / "env.json").string();
  ::setenv(cli::kStoreEnv, path.c_str(), 1);
  auto r = run({"db", "export"});
  ::unsetenv(cli::kStoreEnv);
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "kernel,component,machine,method,ivp,tau,n,frequency,alpha,beta,delta,phi\n");
}

TEST(Cli, StageExitCodes) {
  TempDir d("codes");
  std::ofstream(d.path / "bad.yaml") << "name: X\nstages: 2\n";
  auto parse = run(concat({"tune", "--machine", (d.path / "bad.yaml").string(), "--ivp", data("ivps/ic.yaml"), "--n",
                           "161", "--store", (d.path / "db.json").string(), "--out-dir", d.path.string()},
                          docs()));
  EXPECT_EQ(parse.code, exit_code(Stage::parse));
  EXPECT_NE(parse.err.find("[parse]"), std::string::npos);

  std::ofstream(d.path / "db.json") << "garbage";
  auto store = run({"db", "export", "--store", (d.path / "db.json").string()});
  EXPECT_EQ(store.code, exit_code(Stage::store));

  std::ofstream(d.path / "m.csv") << "variant,tau,n,seconds\nA,1,10,1.0\n";
  auto meas = run({"strategy-eval", "--measurements", (d.path / "m.csv").string(), "--selection",
                   (d.path / "missing.json").string()});
  EXPECT_EQ(meas.code, exit_code(Stage::measurement));
}

TEST(Cli, FailedTuneLeavesStoreUntouched) {
  TempDir d("partial");
  // n below the smallest valid IC size fails validation before any prediction.
  auto r = run(concat({"tune", "--machine", data("machines/hsw.yaml"), "--ivp", data("ivps/ic.yaml"), "--n", "0",
                       "--store", (d.path / "db.json").string(), "--out-dir", d.path.string()},
                      docs()));
  EXPECT_NE(r.code, 0);
  EXPECT_FALSE(std::filesystem::exists(d.path / "db.json"));
}

#ifdef PIRKTUNE_CLI_PATH
TEST(Cli, BinaryExitCodes) {
  EXPECT_EQ(std::system((std::string(PIRKTUNE_CLI_PATH) + " --help > /dev/null").c_str()), 0);
  int rc = std::system((std::string(PIRKTUNE_CLI_PATH) + " codegen > /dev/null 2>&1").c_str());
  EXPECT_EQ(WEXITSTATUS(rc), cli::kUsageExit);
}
#endif
