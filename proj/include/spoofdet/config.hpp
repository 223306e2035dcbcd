// Copyright (c) 2026 The spoofdet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>

#include "spoofdet/dsu.hpp"
#include "spoofdet/eval.hpp"
#include "spoofdet/mhfa.hpp"
#include "spoofdet/synth.hpp"
#include "spoofdet/trainer.hpp"

namespace spoofdet {

// JSON bindings. Reading is lenient about absent keys (defaults apply) and
// strict about unknown ones, so config typos fail loudly.
void to_json(nlohmann::json& j, const DsuConfig& c);
void from_json(const nlohmann::json& j, DsuConfig& c);
void to_json(nlohmann::json& j, const MhfaConfig& c);
void from_json(const nlohmann::json& j, MhfaConfig& c);
void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const FusionSpec& c);
void from_json(const nlohmann::json& j, FusionSpec& c);

/// One run's full configuration: per-module sections, paths, one top seed.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string workdir = "work";
  std::string manifest;    // dataset manifest consumed by train/score
  std::string checkpoint;  // model consumed by score
  SynthConfig synth;
  MhfaConfig mhfa;
  TrainConfig train;
  FusionSpec fusion;
};

// The defaults document every section starts from.
nlohmann::json default_run_config_json();

// Parses a document merged over the defaults. Sub-seeds are derived from the
// top-level seed per purpose (synth, train) unless a section pins its own;
// mhfa.L/mhfa.D default to the synth dimensions when left at 0.
RunConfig parse_run_config(const nlohmann::json& doc);

// Applies "--section.key value" style overrides: the dotted key navigates
// into the document, the value is parsed as JSON when possible and kept as a
// string otherwise.
void apply_override(nlohmann::json& doc, const std::string& dotted_key, const std::string& value);

nlohmann::json load_json_file(const std::string& path);

// Deep merge of overlay onto base (objects merge recursively, everything
// else replaces).
nlohmann::json merge_json(nlohmann::json base, const nlohmann::json& overlay);

}  // namespace spoofdet
