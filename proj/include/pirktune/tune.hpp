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

// End-to-end tuning pipeline: enumerate variants, specialize kernels, predict
// them with the ECM model (or reuse stored predictions), rank the variants
// per core count and system size, select the candidates and emit their code.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pirktune/codegen.hpp"
#include "pirktune/descfmt.hpp"
#include "pirktune/ecm.hpp"
#include "pirktune/error.hpp"
#include "pirktune/predict.hpp"
#include "pirktune/store.hpp"
#include "pirktune/wsm.hpp"

namespace pirktune {

struct TuneOptions {
  std::optional<std::filesystem::path> out_dir;  // no files when unset
  std::vector<std::pair<int, double>> barrier_samples;  // replaces the machine's barrier benchmark
};

struct KernelRow {
  std::string kernel;
  int component = -1;
  std::int64_t sample_n = 0;  // size the ECM prediction was made at
  KernelPrediction prediction;
};

struct TuneResult {
  struct Point {
    int tau = 1;
    std::int64_t n = 0;
    double barrier_cost = 0;
    std::vector<VariantPrediction> predictions;  // enumeration order
    Selection selection;
    std::vector<KernelRow> kernels;
    std::vector<std::string> files;
  };
  struct Run {
    std::string method;
    std::string ivp;
    std::vector<ImplVariant> variants;
    std::vector<KernelChoice> kernels;
    std::map<int, std::vector<std::int64_t>> samples;  // ranking sizes per core count
    CommModel comm;
    std::vector<std::string> kernel_files;
    std::vector<Point> points;
  };

  std::vector<Run> runs;
  std::string report_text;
  std::string report_json;

  // Not part of the reports.
  std::uint64_t ecm_evaluations = 0;
  std::size_t kernels_computed = 0;
  std::size_t kernels_reused = 0;  // distinct predictions served by the store
  std::set<std::string> computed_kernels;
};

namespace detail {

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::error_code ec;
  std::filesystem::create_directories(p.parent_path(), ec);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw CodegenError("cannot write " + p.string());
  out << text;
  if (!out) throw CodegenError("write to " + p.string() + " failed");
}

// Number of executions of every %KERNEL reference per timestep, in skeleton
// order.
inline std::vector<std::pair<std::string, std::int64_t>> kernel_executions(const ImplSkeleton& sk,
                                                                           const ODEMethod& method) {
  std::vector<std::pair<std::string, std::int64_t>> out;
  const std::vector<std::pair<std::string, double>> bind = {{"m", double(method.corrector_steps)},
                                                            {"s", double(method.stages)}};
  auto rec = [&](auto&& self, const CodeBlock& block, std::int64_t mult) -> void {
    for (const auto& node : block) {
      if (node.kind == CodeNode::Kind::loop) {
        auto trips = static_cast<std::int64_t>(eval_constant(node.trips, bind));
        self(self, node.body, mult * std::max<std::int64_t>(trips, 0));
      } else if (node.kind == CodeNode::Kind::kernel) {
        out.emplace_back(node.ref, mult);
      }
    }
  };
  rec(rec, sk.code, 1);
  return out;
}

struct KernelSlot {
  KernelChoice choice;
  const KernelVariantDef* def = nullptr;
  const KernelTemplate* tmpl = nullptr;
  std::vector<GeneratedKernel> symbolic;   // one per component (or one)
};

}  // namespace detail

class Tuner {
 public:
  Tuner(const ValidatedScenario& sc, PredictionStore& store, TuneOptions opts = {})
      : sc_(sc), store_(store), opts_(std::move(opts)), fingerprint_(machine_fingerprint(sc.machine)) {}

  TuneResult run() {
    const std::uint64_t ecm_before = ecm_evaluation_counter().load();
    TuneResult res;
    for (const auto& method : sc_.methods)
      for (const auto& ivp : sc_.ivps) res.runs.push_back(run_one(method, ivp, res));
    store_.flush();
    res.ecm_evaluations = ecm_evaluation_counter().load() - ecm_before;
    res.report_text = render_text(res);
    res.report_json = render_json(res);
    if (opts_.out_dir) {
      detail::write_file(*opts_.out_dir / "report.txt", res.report_text);
      detail::write_file(*opts_.out_dir / "report.json", res.report_json);
    }
    return res;
  }

 private:
  double delta() const { return double(sc_.machine.elements_per_cl(kDoubleBytes)); }

  CommModel comm_model() {
    if (!opts_.barrier_samples.empty()) {
      CommModel cm = fit_comm_model(opts_.barrier_samples);
      if (store_.get_comm(fingerprint_) != cm) store_.put_comm(fingerprint_, cm);
      return cm;
    }
    if (auto cm = store_.get_comm(fingerprint_)) return *cm;
    CommModel cm;
    if (!sc_.machine.barrier_samples.empty()) cm = fit_comm_model(sc_.machine.barrier_samples);
    store_.put_comm(fingerprint_, cm);
    return cm;
  }

  // Prediction of one specialized kernel at size n (ECM evaluated at n).
  KernelPrediction predict_at(const detail::KernelSlot& slot, std::size_t comp_idx, const ODEMethod& method,
                              const IVP& ivp, int tau, std::int64_t n, TuneResult& res,
                              std::vector<std::string>* kernel_files) {
    const GeneratedKernel& sym = slot.symbolic[comp_idx];
    PredictionKey key{slot.choice.kernel,
                      sym.component ? static_cast<int>(*sym.component) : -1,
                      fingerprint_,
                      method.name,
                      sym.component ? ivp.name : std::string(kNoIvp),
                      tau,
                      n,
                      sc_.machine.clock_hz};
    GeneratedKernel g = specialize_kernel(*slot.tmpl, *slot.def, method, sym.component ? &ivp : nullptr,
                                          sym.component, n);
    if (opts_.out_dir && kernel_files) {
      std::string name = kernel_file_name(g, ivp.components.size());
      std::string rel = "kernels/" + name;
      if (std::find(kernel_files->begin(), kernel_files->end(), rel) == kernel_files->end()) {
        detail::write_file(*opts_.out_dir / rel, emit_analyzer_kernel(g));
        kernel_files->push_back(rel);
      }
    }
    if (auto hit = store_.get(key)) {
      if (fresh_.insert(key).second) ++res.kernels_reused;
      return *hit;
    }
    const double beta = double(g.beta_at(n));
    KernelCharacterization c = characterize(g, sc_.machine);
    ECMPrediction p = ecm_single(c, array_residency(g, sc_.machine, n, tau), sc_.machine, delta());
    const double alpha = ecm_multicore(p, tau, sc_.machine);
    KernelPrediction kp{slot.choice.kernel, tau, n, alpha, beta, delta(), sc_.machine.clock_hz, 0.0};
    if (alpha > 0 && beta > 0) kp.phi = kernel_runtime(alpha, beta, kp.delta, kp.f);
    store_.put(key, kp);
    fresh_.insert(key);
    ++res.kernels_computed;
    res.computed_kernels.insert(slot.choice.kernel);
    return kp;
  }

  TuneResult::Run run_one(const ODEMethod& method, const IVP& ivp, TuneResult& res) {
    TuneResult::Run run;
    run.method = method.name;
    run.ivp = ivp.name;
    run.variants = enumerate_variants(sc_.skeletons, sc_.templates);
    run.kernels = distinct_kernels(run.variants);
    run.comm = comm_model();

    std::vector<detail::KernelSlot> slots;
    for (const auto& kc : run.kernels) {
      detail::KernelSlot slot;
      slot.choice = kc;
      slot.tmpl = &sc_.template_named(kc.templ);
      slot.def = slot.tmpl->variant(kc.kernel);
      slot.symbolic = specialize_for_ivp(*slot.tmpl, *slot.def, method, ivp, std::nullopt);
      slots.push_back(std::move(slot));
    }

    std::optional<std::int64_t> fixed = sc_.n ? sc_.n : ivp.n;
    if (sc_.n_max) fixed.reset();
    const std::int64_t n_min = ivp.n_min;

    for (int tau : sc_.cores) {
      // Sample sizes per kernel specialization and the union used for ranking.
      std::vector<std::vector<std::vector<std::int64_t>>> cuts(slots.size());
      std::set<std::int64_t> ranking_sizes;
      if (fixed) {
        ranking_sizes.insert(*fixed);
      } else {
        for (std::size_t k = 0; k < slots.size(); ++k) {
          for (const auto& g : slots[k].symbolic) {
            cuts[k].push_back(kernel_cutpoints(g, sc_.machine, tau));
            for (auto s : sample_sizes(cuts[k].back(), n_min, *sc_.n_max)) ranking_sizes.insert(s);
          }
        }
      }
      run.samples[tau].assign(ranking_sizes.begin(), ranking_sizes.end());

      for (std::int64_t n : ranking_sizes) {
        TuneResult::Point pt;
        pt.tau = tau;
        pt.n = n;
        pt.barrier_cost = run.comm.cost(tau);
        // Kernel predictions at this size, keyed by kernel name.
        std::map<std::string, std::vector<KernelPrediction>> per_kernel;
        for (std::size_t k = 0; k < slots.size(); ++k) {
          for (std::size_t c = 0; c < slots[k].symbolic.size(); ++c) {
            std::int64_t sample_n = n;
            if (!fixed) {
              const auto& kc = cuts[k][c];
              auto samples = sample_sizes(kc, n_min, *sc_.n_max);
              sample_n = samples.at(std::min(range_index(kc, n_min, n), samples.size() - 1));
            }
            KernelPrediction at_sample =
                predict_at(slots[k], c, method, ivp, tau, sample_n, res, &run.kernel_files);
            KernelPrediction kp = at_sample;
            kp.n = n;
            if (sample_n != n) {
              kp.beta = double(slots[k].symbolic[c].beta_at(n));
              kp.phi = kp.alpha > 0 && kp.beta > 0 ? kernel_runtime(kp.alpha, kp.beta, kp.delta, kp.f) : 0.0;
            }
            const auto& sym = slots[k].symbolic[c];
            pt.kernels.push_back(
                {slots[k].choice.kernel, sym.component ? static_cast<int>(*sym.component) : -1, sample_n, kp});
            per_kernel[slots[k].choice.kernel].push_back(kp);
          }
        }
        for (const auto& v : run.variants) {
          const ImplSkeleton& sk = sc_.skeleton_named(v.skeleton);
          std::vector<KernelPrediction> list;
          for (const auto& [tname, mult] : detail::kernel_executions(sk, method))
            for (std::int64_t r = 0; r < mult; ++r)
              for (const auto& kp : per_kernel.at(v.kernel_for(tname))) list.push_back(kp);
          pt.predictions.push_back(variant_prediction(v.id, list, count_barriers(sk, method), run.comm, tau, n));
        }
        pt.selection = rank_and_select(pt.predictions, sc_.deviation);
        if (opts_.out_dir) {
          for (const auto& id : pt.selection.lambda()) {
            const ImplVariant& v = *std::find_if(run.variants.begin(), run.variants.end(),
                                                 [&](const ImplVariant& x) { return x.id == id; });
            auto vs = specialize_variant(v, sc_.skeleton_named(v.skeleton), sc_.templates, method, ivp,
                                         fixed ? std::optional<std::int64_t>(n) : std::nullopt);
            std::string dir = "variants/" + method.name + "_" + ivp.name + (fixed ? "_n" + std::to_string(n) : "");
            std::string rel = dir + "/" + id + ".c";
            detail::write_file(*opts_.out_dir / rel, generate_variant_code(vs));
            pt.files.push_back(rel);
          }
        }
        run.points.push_back(std::move(pt));
      }
    }
    return run;
  }

  std::string render_text(const TuneResult& res) const {
    const MachineModel& m = sc_.machine;
    std::string out;
    out += "pirktune report\n";
    out += "machine " + m.name + " (fingerprint " + fingerprint_ + "), f = " + detail::sci(m.clock_hz) + " Hz\n";
    out += "deviation " + format_double(sc_.deviation) + " %\n";
    for (const auto& run : res.runs) {
      out += "\nmethod " + run.method + ", IVP " + run.ivp + "\n";
      out += "variants " + std::to_string(run.variants.size()) + ", distinct kernels " +
             std::to_string(run.kernels.size()) + "\n";
      out += "barrier model: a = " + detail::sci(run.comm.a) + " s, b = " + detail::sci(run.comm.b) + " s/thread\n";
      if (sc_.n_max) {
        for (const auto& [tau, sizes] : run.samples) {
          out += "sample sizes (tau = " + std::to_string(tau) + "):";
          for (auto s : sizes) out += " " + std::to_string(s);
          out += "\n";
        }
      }
      for (const auto& pt : run.points) {
        out += "\n[tau = " + std::to_string(pt.tau) + ", n = " + std::to_string(pt.n) + "]\n";
        out += "kernel predictions (alpha cy/CL, beta, phi s):\n";
        for (const auto& k : pt.kernels) {
          out += "  " + k.kernel + (k.component >= 0 ? "#" + std::to_string(k.component) : std::string()) +
                 "  " + detail::sci(k.prediction.alpha) + "  " + format_double(k.prediction.beta) + "  " +
                 detail::sci(k.prediction.phi);
          if (k.sample_n != pt.n) out += "  (ECM at n = " + std::to_string(k.sample_n) + ")";
          out += "\n";
        }
        out += "ranking (theta s, t_com s):\n";
        for (std::size_t i = 0; i < pt.selection.ranking.size(); ++i) {
          const auto& r = pt.selection.ranking[i];
          const auto& vp = *std::find_if(pt.predictions.begin(), pt.predictions.end(),
                                         [&](const VariantPrediction& p) { return p.variant == r.variant; });
          char rank[16];
          std::snprintf(rank, sizeof rank, "%3zu", i + 1);
          out += std::string("  ") + rank + (i < pt.selection.lambda_size ? " * " : "   ") + r.variant + "  " +
                 detail::sci(r.theta) + "  " + detail::sci(vp.t_com) + "\n";
        }
        out += "selected " + std::to_string(pt.selection.lambda_size) + " of " +
               std::to_string(pt.selection.ranking.size()) + " variants\n";
        for (const auto& f : pt.files) out += "  " + f + "\n";
      }
    }
    return out;
  }

  std::string render_json(const TuneResult& res) const {
    nlohmann::json doc;
    doc["machine"] = sc_.machine.name;
    doc["fingerprint"] = fingerprint_;
    doc["frequency"] = sc_.machine.clock_hz;
    doc["deviation"] = sc_.deviation;
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& run : res.runs) {
      nlohmann::json r;
      r["method"] = run.method;
      r["ivp"] = run.ivp;
      r["variants"] = run.variants.size();
      r["kernels"] = run.kernels.size();
      nlohmann::json samples = nlohmann::json::object();
      for (const auto& [tau, sizes] : run.samples) samples[std::to_string(tau)] = sizes;
      r["samples"] = std::move(samples);
      r["barrier_model"] = {{"a", run.comm.a}, {"b", run.comm.b}, {"residual", run.comm.residual}};
      r["kernel_files"] = run.kernel_files;
      nlohmann::json pts = nlohmann::json::array();
      for (const auto& pt : run.points) {
        nlohmann::json p;
        p["tau"] = pt.tau;
        p["n"] = pt.n;
        p["barrier_cost"] = pt.barrier_cost;
        nlohmann::json ks = nlohmann::json::array();
        for (const auto& k : pt.kernels)
          ks.push_back({{"kernel", k.kernel},
                        {"component", k.component},
                        {"sample_n", k.sample_n},
                        {"alpha", k.prediction.alpha},
                        {"beta", k.prediction.beta},
                        {"delta", k.prediction.delta},
                        {"f", k.prediction.f},
                        {"phi", k.prediction.phi}});
        p["kernel_predictions"] = std::move(ks);
        nlohmann::json ranking = nlohmann::json::array();
        for (std::size_t i = 0; i < pt.selection.ranking.size(); ++i) {
          const auto& rv = pt.selection.ranking[i];
          const auto& vp = *std::find_if(pt.predictions.begin(), pt.predictions.end(),
                                         [&](const VariantPrediction& x) { return x.variant == rv.variant; });
          ranking.push_back({{"variant", rv.variant},
                             {"theta", rv.theta},
                             {"t_com", vp.t_com},
                             {"barriers", vp.barriers},
                             {"selected", i < pt.selection.lambda_size}});
        }
        p["ranking"] = std::move(ranking);
        p["lambda"] = pt.selection.lambda();
        p["files"] = pt.files;
        pts.push_back(std::move(p));
      }
      r["results"] = std::move(pts);
      runs.push_back(std::move(r));
    }
    doc["runs"] = std::move(runs);
    return doc.dump(2) + "\n";
  }

  const ValidatedScenario& sc_;
  PredictionStore& store_;
  TuneOptions opts_;
  std::string fingerprint_;
  std::set<PredictionKey> fresh_;  // keys already counted in this run
};

inline TuneResult run_tune(const ValidatedScenario& sc, PredictionStore& store, TuneOptions opts = {}) {
  return Tuner(sc, store, std::move(opts)).run();
}

}  // namespace pirktune
