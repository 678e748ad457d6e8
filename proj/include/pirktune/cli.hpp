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

// Command-line front end: tune, codegen, strategy-eval and db export.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pirktune/codegen.hpp"
#include "pirktune/descfmt.hpp"
#include "pirktune/error.hpp"
#include "pirktune/predict.hpp"
#include "pirktune/store.hpp"
#include "pirktune/tune.hpp"

namespace pirktune::cli {

inline constexpr int kUsageExit = 2;
inline constexpr const char* kStoreEnv = "PIRKTUNE_STORE";
inline constexpr const char* kDefaultStore = "pirktune-store.json";

inline std::string read_file(const std::filesystem::path& p, Stage stage = Stage::parse) {
  std::ifstream in(p, std::ios::binary);
  if (!in) {
    const std::string msg = "cannot read " + p.string();
    if (stage == Stage::measurement) throw MeasurementError(msg);
    throw ParseError(msg);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// YAML documents of a directory in file-name order.
inline std::vector<std::filesystem::path> yaml_files(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw ParseError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".yaml" || ext == ".yml")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Candidate closest to `word`; ties go to the lexicographically smaller one.
inline std::optional<std::string> nearest_match(const std::string& word, const std::vector<std::string>& candidates) {
  std::optional<std::string> best;
  std::size_t best_d = 0;
  for (const auto& c : candidates) {
    std::size_t d = edit_distance(word, c);
    if (!best || d < best_d || (d == best_d && c < *best)) {
      best = c;
      best_d = d;
    }
  }
  return best;
}

struct DocumentArgs {
  std::string machine;
  std::vector<std::string> methods;
  std::vector<std::string> ivps;
  std::string templates_dir = "data/templates";
  std::string skeletons_dir = "data/skeletons";
  std::optional<std::int64_t> n;
  std::optional<std::int64_t> n_max;
  std::vector<int> cores{1};
  double deviation = 5.0;

  void add_to(CLI::App* app, bool with_machine) {
    if (with_machine) app->add_option("--machine", machine, "machine model document")->required();
    app->add_option("--method", methods, "ODE method document (repeatable)")->required();
    app->add_option("--ivp", ivps, "IVP document (repeatable)");
    app->add_option("--templates-dir", templates_dir, "directory of kernel template documents")
        ->capture_default_str();
    app->add_option("--skeletons-dir", skeletons_dir, "directory of implementation skeleton documents")
        ->capture_default_str();
  }

  TuningScenario load(bool with_machine) const {
    TuningScenario sc;
    if (with_machine) sc.machine = parse_machine(read_file(machine), std::filesystem::path(machine).stem().string());
    for (const auto& p : methods) sc.methods.push_back(parse_method(read_file(p), std::filesystem::path(p).stem().string()));
    for (const auto& p : ivps) sc.ivps.push_back(parse_ivp(read_file(p), std::filesystem::path(p).stem().string()));
    for (const auto& p : yaml_files(templates_dir))
      sc.templates.push_back(parse_kernel_template(read_file(p), p.stem().string()));
    for (const auto& p : yaml_files(skeletons_dir)) sc.skeletons.push_back(parse_skeleton(read_file(p), p.stem().string()));
    sc.n = n;
    sc.n_max = n_max;
    sc.cores = cores;
    sc.deviation = deviation;
    return sc;
  }
};

inline std::string store_path(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kStoreEnv); env && *env) return env;
  return kDefaultStore;
}

inline std::string exit_code_help() {
  std::string s = "Exit codes:\n  0  success\n  2  usage error\n";
  for (Stage st : {Stage::parse, Stage::codegen, Stage::model, Stage::store, Stage::measurement, Stage::exec})
    s += "  " + std::to_string(exit_code(st)) + "  " + stage_name(st) + " error\n";
  return s;
}

inline std::string percent(double v) {
  if (v == 0.0) return "--";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", v);
  return buf;
}

// Point of a tune report (report.json) used as the predicted selection.
inline std::vector<RankedVariant> ranking_from_report(const std::string& text, std::optional<int> tau,
                                                      std::optional<std::int64_t> n) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
    for (const auto& run : doc.at("runs"))
      for (const auto& pt : run.at("results")) {
        if (tau && pt.at("tau").get<int>() != *tau) continue;
        if (n && pt.at("n").get<std::int64_t>() != *n) continue;
        std::vector<RankedVariant> out;
        for (const auto& r : pt.at("ranking"))
          out.push_back({r.at("variant").get<std::string>(), r.at("theta").get<double>()});
        return out;
      }
  } catch (const nlohmann::json::exception& e) {
    throw MeasurementError(std::string("selection report is malformed: ") + e.what());
  }
  throw MeasurementError("selection report has no ranking for the requested core count and size");
}

struct StrategyRow {
  StrategyOutcome outcome;
  double loss = 0;      // vs BestVariant, percent
  double overhead = 0;  // percent
  double gain = 0;      // vs RunAll, percent
};

// All strategies on one measured (tau, n) point. `variants` are all N
// enumerated variants; `ranking` drives the preselect strategies.
inline std::vector<StrategyRow> evaluate_strategies(const std::map<std::string, double>& measured,
                                                    const std::vector<RankedVariant>& ranking,
                                                    const std::vector<double>& deviations, std::size_t k,
                                                    std::uint64_t seed) {
  std::vector<std::string> variants;
  for (const auto& [v, t] : measured) variants.push_back(v);
  std::vector<Strategy> strategies{{StrategyKind::best_variant}, {StrategyKind::run_all}};
  for (double d : deviations) strategies.push_back({StrategyKind::preselect, d});
  if (k > 0) strategies.push_back({StrategyKind::random_select, 5, k});
  std::optional<Selection> sel;
  if (!ranking.empty()) sel = rank_and_select(ranking, deviations.empty() ? 5.0 : deviations.front());

  std::vector<StrategyRow> rows;
  for (const auto& st : strategies) {
    if (st.kind == StrategyKind::preselect && !sel) throw MeasurementError("preselect strategies need --selection");
    StrategyRow row;
    row.outcome = run_strategy(st, variants, measured, sel ? &*sel : nullptr, seed);
    std::vector<double> times;
    for (const auto& v : row.outcome.tested_variants) times.push_back(measured.at(v));
    row.overhead = tuning_overhead(times, *std::min_element(times.begin(), times.end()));
    rows.push_back(std::move(row));
  }
  const double t_best = rows[0].outcome.t_step;
  const double t_ra = rows[1].outcome.t_at;
  for (auto& r : rows) {
    r.loss = (r.outcome.t_step - t_best) / t_best * 100.0;
    r.gain = performance_gain(t_ra, r.outcome.t_at);
  }
  return rows;
}

inline std::string format_strategy_table(const std::vector<StrategyRow>& rows, int tau, std::int64_t n) {
  std::string out = "tau = " + std::to_string(tau) + ", n = " + std::to_string(n) + "\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %-28s %14s %8s %6s %10s %8s\n", "strategy", "chosen", "t_step[s]", "loss",
                "|L|", "overhead", "gain");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-16s %-28s %14.6e %8s %6zu %10s %8s\n", r.outcome.strategy.c_str(),
                  r.outcome.chosen.c_str(), r.outcome.t_step, percent(r.loss).c_str(), r.outcome.tested,
                  percent(r.overhead).c_str(), percent(r.gain).c_str());
    out += buf;
  }
  return out;
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"pirktune: offline autotuner for parallel iterated Runge-Kutta solvers"};
  app.footer(exit_code_help());
  app.require_subcommand(1);

  // tune
  DocumentArgs tune_docs;
  std::string tune_store, tune_out = "pirktune-out", tune_barrier;
  auto* tune = app.add_subcommand("tune", "predict, rank and select implementation variants");
  tune_docs.add_to(tune, true);
  auto* n_opt = tune->add_option("--n", tune_docs.n, "fixed system size");
  tune->add_option("--n-max", tune_docs.n_max, "largest system size; sizes are sampled from cache boundaries")
      ->excludes(n_opt);
  tune->add_option("--cores", tune_docs.cores, "active core counts")->delimiter(',')->capture_default_str();
  tune->add_option("--deviation", tune_docs.deviation, "selection bound in percent")->capture_default_str();
  tune->add_option("--store", tune_store, std::string("prediction store (default $") + kStoreEnv + " or " +
                                              kDefaultStore + ")");
  tune->add_option("--out-dir", tune_out, "output directory")->capture_default_str();
  tune->add_option("--barrier-csv", tune_barrier, "barrier benchmark (tau,seconds) replacing the machine's samples");

  // codegen
  DocumentArgs cg_docs;
  cg_docs.ivps.clear();
  std::string cg_variant, cg_out;
  auto* codegen = app.add_subcommand("codegen", "emit the specialized source of one variant");
  cg_docs.add_to(codegen, false);
  codegen->add_option("variant", cg_variant, "variant id, e.g. A_LCjli_APRXji")->required();
  codegen->add_option("--n", cg_docs.n, "fixed system size (runtime parameter when omitted)");
  codegen->add_option("--out-dir", cg_out, "write <variant>.c here instead of standard output");

  // strategy-eval
  std::string se_meas, se_selection;
  std::optional<int> se_tau;
  std::optional<std::int64_t> se_n;
  std::vector<double> se_dev{5.0, 10.0};
  std::size_t se_k = 20;
  std::uint64_t se_seed = 1;
  auto* se = app.add_subcommand("strategy-eval", "compare autotuning strategies on measured runtimes");
  se->add_option("--measurements", se_meas, "CSV with columns variant,tau,n,seconds")->required();
  se->add_option("--selection", se_selection, "report.json of a tune run providing the predicted ranking");
  se->add_option("--cores", se_tau, "core count to evaluate (required when the CSV has several)");
  se->add_option("--n", se_n, "system size to evaluate (required when the CSV has several)");
  se->add_option("--deviation", se_dev, "preselect bounds in percent")->delimiter(',')->capture_default_str();
  se->add_option("--random-k", se_k, "variants drawn by the random strategy (0 disables it)")->capture_default_str();
  se->add_option("--seed", se_seed, "seed of the random strategy")->capture_default_str();

  // db export
  std::string db_store, db_out;
  auto* db = app.add_subcommand("db", "inspect the prediction store");
  db->require_subcommand(1);
  auto* db_export = db->add_subcommand("export", "dump kernel predictions as CSV");
  db_export->add_option("--store", db_store, std::string("prediction store (default $") + kStoreEnv + " or " +
                                                 kDefaultStore + ")");
  db_export->add_option("--out", db_out, "output file (standard output when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    for (auto* sub : app.get_subcommands()) {
      err << sub->help();
      return kUsageExit;
    }
    err << app.help();
    return kUsageExit;
  }

  try {
    if (tune->parsed()) {
      if (tune_docs.ivps.empty()) {
        err << "usage error: tune needs at least one --ivp\n";
        return kUsageExit;
      }
      ValidatedScenario sc = validate_scenario(tune_docs.load(true));
      PredictionStore store(store_path(tune_store));
      TuneOptions opts{std::filesystem::path(tune_out), {}};
      if (!tune_barrier.empty()) opts.barrier_samples = parse_barrier_csv(read_file(tune_barrier, Stage::measurement));
      TuneResult res = run_tune(sc, store, opts);
      out << res.report_text;
      out << "\nkernel predictions computed: " << res.computed_kernels.size() << " kernels ("
          << res.kernels_computed << " specializations), reused: " << res.kernels_reused
          << ", ECM evaluations: " << res.ecm_evaluations << "\n";
      out << "reports: " << (std::filesystem::path(tune_out) / "report.txt").string() << ", "
          << (std::filesystem::path(tune_out) / "report.json").string() << "\n";
      return 0;
    }
    if (codegen->parsed()) {
      TuningScenario raw = cg_docs.load(false);
      std::vector<std::string> ids;
      auto variants = enumerate_variants(raw.skeletons, raw.templates);
      for (const auto& v : variants) ids.push_back(v.id);
      auto it = std::find_if(variants.begin(), variants.end(), [&](const ImplVariant& v) { return v.id == cg_variant; });
      if (it == variants.end()) {
        std::string msg = "unknown variant '" + cg_variant + "'";
        if (auto near = nearest_match(cg_variant, ids)) msg += "; did you mean '" + *near + "'?";
        throw CodegenError(msg);
      }
      const ImplSkeleton* sk = nullptr;
      for (const auto& s : raw.skeletons)
        if (s.name == it->skeleton) sk = &s;
      if (raw.ivps.size() > 1) {
        err << "usage error: codegen takes at most one --ivp\n";
        return kUsageExit;
      }
      if (raw.methods.size() != 1) {
        err << "usage error: codegen takes exactly one --method\n";
        return kUsageExit;
      }
      const IVP* ivp = raw.ivps.empty() ? nullptr : &raw.ivps.front();
      if (!ivp)
        for (const auto& kc : it->kernel_choice)
          for (const auto& t : raw.templates)
            if (t.name == kc.templ && t.variant(kc.kernel) && t.variant(kc.kernel)->contains_rhs)
              throw CodegenError("variant " + it->id + " evaluates the right-hand side; pass --ivp");
      IVP none;
      none.name = kNoIvp;
      auto vs = specialize_variant(*it, *sk, raw.templates, raw.methods.front(), ivp ? *ivp : none, cg_docs.n);
      std::string code = generate_variant_code(vs);
      if (cg_out.empty()) {
        out << code;
      } else {
        auto path = std::filesystem::path(cg_out) / (it->id + ".c");
        detail::write_file(path, code);
        out << path.string() << "\n";
      }
      return 0;
    }
    if (se->parsed()) {
      auto rows = parse_measurements_csv(read_file(se_meas, Stage::measurement));
      std::set<std::pair<int, std::int64_t>> points;
      for (const auto& r : rows)
        if ((!se_tau || r.tau == *se_tau) && (!se_n || r.n == *se_n)) points.insert({r.tau, r.n});
      if (points.empty()) throw MeasurementError("no measurements for the requested core count and size");
      if (points.size() > 1) throw MeasurementError("measurements cover several (cores, n) points; pass --cores and --n");
      const auto [tau, n] = *points.begin();
      std::map<std::string, double> measured;
      for (const auto& r : rows)
        if (r.tau == tau && r.n == n) {
          if (measured.count(r.variant)) throw MeasurementError("duplicate measurement for variant " + r.variant);
          measured[r.variant] = r.seconds;
        }
      std::vector<RankedVariant> ranking;
      if (!se_selection.empty()) ranking = ranking_from_report(read_file(se_selection, Stage::measurement), tau, n);
      for (const auto& r : ranking)
        if (!measured.count(r.variant)) throw MeasurementError("no measurement for variant " + r.variant);
      if (se_selection.empty()) se_dev.clear();
      out << format_strategy_table(evaluate_strategies(measured, ranking, se_dev, se_k, se_seed), tau, n);
      return 0;
    }
    if (db_export->parsed()) {
      std::string path = store_path(db_store);
      if (std::filesystem::exists(path) && !std::ifstream(path)) throw StoreError("store " + path + " is unreadable");
      PredictionStore store(path);
      std::string csv = store.export_csv();
      if (db_out.empty()) {
        out << csv;
      } else {
        std::ofstream f(db_out, std::ios::binary | std::ios::trunc);
        if (!(f << csv)) throw StoreError("cannot write " + db_out);
      }
      return 0;
    }
  } catch (const Error& e) {
    err << "error [" << stage_name(e.stage()) << "]: " << e.what() << "\n";
    return exit_code(e.stage());
  }
  return kUsageExit;
}

}  // namespace pirktune::cli
