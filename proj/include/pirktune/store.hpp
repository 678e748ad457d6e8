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

// Single-file prediction store. The file is a JSON document with a schema
// version; writes go to a temporary file that replaces the store atomically
// while an exclusive advisory lock is held.

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "pirktune/descfmt.hpp"
#include "pirktune/error.hpp"
#include "pirktune/expr.hpp"
#include "pirktune/predict.hpp"

namespace pirktune {

inline constexpr int kStoreSchemaVersion = 1;
inline constexpr const char* kNoIvp = "NONE";

struct PredictionKey {
  std::string kernel;
  int component = -1;  // IVP component of right-hand-side kernels, -1 otherwise
  std::string machine;  // machine fingerprint
  std::string method;
  std::string ivp = kNoIvp;
  int tau = 1;
  std::int64_t n = 0;
  double frequency = 0;

  auto operator<=>(const PredictionKey&) const = default;
  bool operator==(const PredictionKey&) const = default;
};

namespace detail {

class FileLock {
 public:
  FileLock(const std::filesystem::path& path, int op) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) throw StoreError("cannot open lock file " + path.string());
    if (::flock(fd_, op) != 0) {
      ::close(fd_);
      throw StoreError("cannot lock " + path.string());
    }
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace detail

class PredictionStore {
 public:
  // In-memory store that is never written.
  PredictionStore() = default;

  explicit PredictionStore(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.empty()) return;
    if (path_.has_parent_path()) {
      std::error_code ec;
      std::filesystem::create_directories(path_.parent_path(), ec);
    }
    detail::FileLock lock(lock_path(), LOCK_SH);
    load_file(predictions_, comm_);
  }

  const std::filesystem::path& path() const { return path_; }

  std::optional<KernelPrediction> get(const PredictionKey& key) const {
    auto it = predictions_.find(key);
    if (it == predictions_.end()) return std::nullopt;
    return it->second;
  }

  void put(const PredictionKey& key, const KernelPrediction& p) {
    predictions_[key] = p;
    dirty_.insert(key);
  }

  std::optional<CommModel> get_comm(const std::string& machine) const {
    auto it = comm_.find(machine);
    if (it == comm_.end()) return std::nullopt;
    return it->second;
  }

  void put_comm(const std::string& machine, const CommModel& cm) {
    comm_[machine] = cm;
    dirty_comm_.insert(machine);
  }

  std::size_t size() const { return predictions_.size(); }
  const std::map<PredictionKey, KernelPrediction>& predictions() const { return predictions_; }

  // Writes pending records. Records written by other processes since this
  // store was opened are kept; on conflicting keys this store's values win.
  void flush() {
    if (path_.empty() || (dirty_.empty() && dirty_comm_.empty())) return;
    detail::FileLock lock(lock_path(), LOCK_EX);
    std::map<PredictionKey, KernelPrediction> merged;
    std::map<std::string, CommModel> merged_comm;
    load_file(merged, merged_comm);
    for (const auto& k : dirty_) merged[k] = predictions_.at(k);
    for (const auto& k : dirty_comm_) merged_comm[k] = comm_.at(k);

    const std::string text = to_json(merged, merged_comm).dump(1) + "\n";
    std::filesystem::path tmp = path_;
    tmp += ".tmp." + std::to_string(::getpid());
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw StoreError("cannot write " + tmp.string());
      out << text;
      out.flush();
      if (!out) throw StoreError("write to " + tmp.string() + " failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path_, ec);
    if (ec) {
      std::filesystem::remove(tmp, ec);
      throw StoreError("cannot replace " + path_.string());
    }
    predictions_ = std::move(merged);
    comm_ = std::move(merged_comm);
    dirty_.clear();
    dirty_comm_.clear();
  }

  // CSV dump of all kernel predictions in key order.
  std::string export_csv() const {
    std::string out = "kernel,component,machine,method,ivp,tau,n,frequency,alpha,beta,delta,phi\n";
    for (const auto& [k, p] : predictions_) {
      out += k.kernel + "," + (k.component < 0 ? std::string() : std::to_string(k.component)) + "," + k.machine +
             "," + k.method + "," + k.ivp + "," + std::to_string(k.tau) + "," + std::to_string(k.n) + "," +
             format_double(k.frequency) + "," + format_double(p.alpha) + "," + format_double(p.beta) + "," +
             format_double(p.delta) + "," + format_double(p.phi) + "\n";
    }
    return out;
  }

 private:
  std::filesystem::path lock_path() const {
    auto p = path_;
    p += ".lock";
    return p;
  }

  static nlohmann::json to_json(const std::map<PredictionKey, KernelPrediction>& preds,
                                const std::map<std::string, CommModel>& comm) {
    nlohmann::json doc;
    doc["schema_version"] = kStoreSchemaVersion;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [k, p] : preds) {
      arr.push_back({{"kernel", k.kernel},
                     {"component", k.component},
                     {"machine", k.machine},
                     {"method", k.method},
                     {"ivp", k.ivp},
                     {"tau", k.tau},
                     {"n", k.n},
                     {"frequency", k.frequency},
                     {"alpha", p.alpha},
                     {"beta", p.beta},
                     {"delta", p.delta},
                     {"phi", p.phi}});
    }
    doc["kernel_predictions"] = std::move(arr);
    nlohmann::json cm = nlohmann::json::object();
    for (const auto& [fp, c] : comm) {
      cm[fp] = {{"a", c.a},           {"b", c.b},         {"samples", c.samples},
                {"residual", c.residual}, {"tau_min", c.tau_min}, {"tau_max", c.tau_max}};
    }
    doc["comm_models"] = std::move(cm);
    return doc;
  }

  void load_file(std::map<PredictionKey, KernelPrediction>& preds, std::map<std::string, CommModel>& comm) const {
    if (!std::filesystem::exists(path_)) return;
    std::ifstream in(path_, std::ios::binary);
    if (!in) throw StoreError("cannot read store " + path_.string());
    std::stringstream ss;
    ss << in.rdbuf();
    if (ss.str().empty()) return;
    try {
      auto doc = nlohmann::json::parse(ss.str());
      if (!doc.is_object() || doc.value("schema_version", -1) != kStoreSchemaVersion)
        throw StoreError("store " + path_.string() + " has an unsupported schema version");
      for (const auto& r : doc.at("kernel_predictions")) {
        PredictionKey k{r.at("kernel").get<std::string>(), r.at("component").get<int>(),
                        r.at("machine").get<std::string>(), r.at("method").get<std::string>(),
                        r.at("ivp").get<std::string>(), r.at("tau").get<int>(),
                        r.at("n").get<std::int64_t>(), r.at("frequency").get<double>()};
        preds[k] = KernelPrediction{k.kernel,
                                    k.tau,
                                    k.n,
                                    r.at("alpha").get<double>(),
                                    r.at("beta").get<double>(),
                                    r.at("delta").get<double>(),
                                    k.frequency,
                                    r.at("phi").get<double>()};
      }
      for (const auto& [fp, c] : doc.at("comm_models").items()) {
        comm[fp] = CommModel{c.at("a").get<double>(),       c.at("b").get<double>(),
                             c.at("samples").get<std::size_t>(), c.at("residual").get<double>(),
                             c.at("tau_min").get<int>(),    c.at("tau_max").get<int>()};
      }
    } catch (const nlohmann::json::exception& e) {
      throw StoreError("store " + path_.string() + " is corrupt: " + e.what());
    }
  }

  std::filesystem::path path_;
  std::map<PredictionKey, KernelPrediction> predictions_;
  std::map<std::string, CommModel> comm_;
  std::set<PredictionKey> dirty_;
  std::set<std::string> dirty_comm_;
};

// Kernels whose predictions depend on the IVP: exactly those that evaluate
// the right-hand side. Nothing is stale when the IVP did not change.
inline std::set<std::string> stale_kernels_on_ivp_change(const std::vector<KernelTemplate>& templates,
                                                         const IVP& old_ivp, const IVP& new_ivp) {
  std::set<std::string> out;
  if (old_ivp == new_ivp) return out;
  for (const auto& t : templates)
    for (const auto& v : t.variants)
      if (v.contains_rhs) out.insert(v.name);
  return out;
}

}  // namespace pirktune
