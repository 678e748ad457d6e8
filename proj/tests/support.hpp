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

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pirktune/codegen.hpp"
#include "pirktune/descfmt.hpp"

namespace pirktune::test {

inline std::string read(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::filesystem::path data_dir() { return PIRKTUNE_DATA_DIR; }

inline std::vector<std::filesystem::path> yaml_in(const std::string& sub) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(data_dir() / sub)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<KernelTemplate> templates() {
  std::vector<KernelTemplate> out;
  for (const auto& p : yaml_in("templates")) out.push_back(parse_kernel_template(read(p)));
  return out;
}

inline std::vector<ImplSkeleton> skeletons() {
  std::vector<ImplSkeleton> out;
  for (const auto& p : yaml_in("skeletons")) out.push_back(parse_skeleton(read(p)));
  return out;
}

inline ODEMethod method(const std::string& file) { return parse_method(read(data_dir() / "methods" / (file + ".yaml"))); }
inline IVP ivp(const std::string& file) { return parse_ivp(read(data_dir() / "ivps" / (file + ".yaml"))); }
inline MachineModel machine(const std::string& file) {
  return parse_machine(read(data_dir() / "machines" / (file + ".yaml")));
}

inline const ImplSkeleton& skeleton(const std::vector<ImplSkeleton>& sks, const std::string& name) {
  for (const auto& s : sks)
    if (s.name == name) return s;
  throw std::runtime_error("no skeleton " + name);
}

// Radau IIA(7) with the four-digit coefficients printed in the method
// description listing.
inline const char* kRadauIIA7FourDigits = R"(
name: RadauIIA7
stages: 4
order: 7
corrector_steps: 6
A:
  - ["0.1130", "-0.0403", "0.0258", "-0.0099"]
  - ["0.2344", "0.2069", "-0.0479", "0.0160"]
  - ["0.2167", "0.4061", "0.1890", "-0.0242"]
  - ["0.2205", "0.3882", "0.3288", "0.0625"]
b: ["0.2205", "0.3882", "0.3288", "0.0625"]
c: ["0.1130 - 0.0403 + 0.0258 - 0.0099", "0.4094", "0.7877", "1.0"]
)";

// Scenario with the full corpus on one machine, method and IVP.
inline TuningScenario raw_scenario(const std::string& machine_file, const std::string& ivp_file,
                                   std::optional<std::int64_t> n) {
  TuningScenario sc;
  sc.machine = machine(machine_file);
  sc.methods = {method("radau_iia7")};
  sc.ivps = {ivp(ivp_file)};
  sc.templates = templates();
  sc.skeletons = skeletons();
  sc.n = n;
  return sc;
}

inline ValidatedScenario corpus_scenario(const std::string& machine_file, const std::string& ivp_file,
                                         std::optional<std::int64_t> n) {
  return validate_scenario(raw_scenario(machine_file, ivp_file, n));
}

// Random stiffly accurate-looking but arbitrary s-stage method.
inline ODEMethod random_method(std::mt19937_64& rng, int s, int m) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  ODEMethod meth;
  meth.name = "R" + std::to_string(s);
  meth.stages = s;
  meth.order = 1;
  meth.corrector_steps = m;
  meth.A.assign(s, std::vector<double>(s));
  for (auto& row : meth.A)
    for (auto& v : row) v = u(rng);
  meth.b.resize(s);
  meth.c.resize(s);
  for (int i = 0; i < s; ++i) {
    meth.b[i] = u(rng);
    double sum = 0;
    for (double v : meth.A[i]) sum += v;
    meth.c[i] = sum;
  }
  return meth;
}

// Synthetic IVPs with neighbour coupling, built from document text so the
// parser sees them like any other input.
inline IVP random_ivp(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, 2);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  auto num = [&] { return format_double(u(rng)); };
  std::string doc;
  switch (pick(rng)) {
    case 0:
      doc = "name: LIN\naccess distance: 0\nconstants: [\"double k = " + num() +
            "\"]\ncomponents:\n  - first: 1\n    size: n\n    code: \"-k*%in[j] + " + num() + "\"\n";
      break;
    case 1:
      doc = "name: CHAIN\naccess distance: 1\nconstants: [\"double g = " + num() + "\", \"double R = 1.0\"]\n"
            "components:\n"
            "  - first: 1\n    size: 1\n    code: \"g - R*%in[j]\"\n"
            "  - first: 2\n    size: n-1\n    code: \"g*%in[j-1] - R*%in[j] + 0.1*exp(-%in[j]*%in[j])\"\n";
      break;
    default:
      doc = "name: DIFF\naccess distance: 1\nconstants: [\"double d = " + num() + "\"]\n"
            "components:\n"
            "  - first: 1\n    size: 1\n    code: \"d*(%in[j+1] - 2*%in[j])\"\n"
            "  - first: 2\n    size: n-2\n    code: \"d*(%in[j-1] - 2*%in[j] + %in[j+1])\"\n"
            "  - first: n\n    size: 1\n    code: \"d*(%in[j-1] - 2*%in[j])\"\n";
      break;
  }
  return parse_ivp(doc);
}

}  // namespace pirktune::test
