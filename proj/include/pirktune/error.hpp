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

#include <stdexcept>
#include <string>

namespace pirktune {

// Pipeline stage an error originates from. The CLI maps each stage to a
// distinct exit code.
enum class Stage {
  parse,        // description documents, scenario validation
  codegen,      // AST construction, specialization, emission
  model,        // ECM, working sets, runtime prediction, ranking
  store,        // prediction database I/O
  measurement,  // strategy evaluation inputs
  exec,         // reference interpreter
};

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::parse: return "parse";
    case Stage::codegen: return "codegen";
    case Stage::model: return "model";
    case Stage::store: return "store";
    case Stage::measurement: return "measurement";
    case Stage::exec: return "exec";
  }
  return "unknown";
}

inline int exit_code(Stage s) {
  switch (s) {
    case Stage::parse: return 3;
    case Stage::codegen: return 4;
    case Stage::model: return 5;
    case Stage::store: return 6;
    case Stage::measurement: return 7;
    case Stage::exec: return 8;
  }
  return 1;
}

class Error : public std::runtime_error {
 public:
  Error(Stage stage, const std::string& what)
      : std::runtime_error(what), stage_(stage) {}
  Stage stage() const noexcept { return stage_; }

 private:
  Stage stage_;
};

struct ParseError : Error {
  explicit ParseError(const std::string& w) : Error(Stage::parse, w) {}
};
struct CodegenError : Error {
  explicit CodegenError(const std::string& w) : Error(Stage::codegen, w) {}
};
struct ModelError : Error {
  explicit ModelError(const std::string& w) : Error(Stage::model, w) {}
};
struct StoreError : Error {
  explicit StoreError(const std::string& w) : Error(Stage::store, w) {}
};
struct MeasurementError : Error {
  explicit MeasurementError(const std::string& w) : Error(Stage::measurement, w) {}
};

// Raised by the interpreter. `kind` classifies the failure so tests can
// distinguish bounds violations from numeric domain errors.
struct ExecError : Error {
  enum class Kind { unbound, bounds, domain, type };
  ExecError(Kind k, const std::string& w) : Error(Stage::exec, w), kind(k) {}
  Kind kind;
};

}  // namespace pirktune
