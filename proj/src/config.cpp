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

#include "spoofdet/config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include "spoofdet/error.hpp"
#include "spoofdet/rng.hpp"

namespace spoofdet {

namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const char* section) {
  if (!j.is_object()) {
    throw ConfigError(std::string("config section \"") + section + "\" must be a JSON object");
  }
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : j.items()) {
    if (!ok.contains(item.key())) {
      throw ConfigError(std::string("config section \"") + section + "\": unknown key \"" +
                        item.key() + "\"");
    }
  }
}

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out, const char* section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config section \"") + section + "\", key \"" + key +
                      "\": " + e.what());
  }
}

}  // namespace

void to_json(nlohmann::json& j, const DsuConfig& c) {
  j = nlohmann::json{{"p", c.p}, {"eps", c.eps}};
}

void from_json(const nlohmann::json& j, DsuConfig& c) {
  check_keys(j, {"p", "eps"}, "dsu");
  read_key(j, "p", c.p, "dsu");
  read_key(j, "eps", c.eps, "dsu");
}

void to_json(nlohmann::json& j, const MhfaConfig& c) {
  j = nlohmann::json{{"L", c.L},
                     {"D", c.D},
                     {"H", c.H},
                     {"D_cmp", c.D_cmp},
                     {"E", c.E},
                     {"dsu_enabled", c.dsu_enabled},
                     {"dsu", c.dsu},
                     {"adapter_enabled", c.adapter_enabled}};
}

void from_json(const nlohmann::json& j, MhfaConfig& c) {
  check_keys(j, {"L", "D", "H", "D_cmp", "E", "dsu_enabled", "dsu", "adapter_enabled"}, "mhfa");
  read_key(j, "L", c.L, "mhfa");
  read_key(j, "D", c.D, "mhfa");
  read_key(j, "H", c.H, "mhfa");
  read_key(j, "D_cmp", c.D_cmp, "mhfa");
  read_key(j, "E", c.E, "mhfa");
  read_key(j, "dsu_enabled", c.dsu_enabled, "mhfa");
  if (j.contains("dsu")) c.dsu = j.at("dsu").get<DsuConfig>();
  read_key(j, "adapter_enabled", c.adapter_enabled, "mhfa");
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = nlohmann::json{{"L", c.L},
                     {"T_raw", c.T_raw},
                     {"D", c.D},
                     {"n_train_per_class", c.n_train_per_class},
                     {"n_eval_per_class", c.n_eval_per_class},
                     {"seen_generators", c.seen_generators},
                     {"unseen_generators", c.unseen_generators},
                     {"artifact_amplitude", c.artifact_amplitude},
                     {"artifact_band_lo", c.artifact_band_lo},
                     {"artifact_band_hi", c.artifact_band_hi},
                     {"stats_shift_scale", c.stats_shift_scale},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  check_keys(j,
             {"L", "T_raw", "D", "n_train_per_class", "n_eval_per_class", "seen_generators",
              "unseen_generators", "artifact_amplitude", "artifact_band_lo", "artifact_band_hi",
              "stats_shift_scale", "seed"},
             "synth");
  read_key(j, "L", c.L, "synth");
  read_key(j, "T_raw", c.T_raw, "synth");
  read_key(j, "D", c.D, "synth");
  read_key(j, "n_train_per_class", c.n_train_per_class, "synth");
  read_key(j, "n_eval_per_class", c.n_eval_per_class, "synth");
  read_key(j, "seen_generators", c.seen_generators, "synth");
  read_key(j, "unseen_generators", c.unseen_generators, "synth");
  read_key(j, "artifact_amplitude", c.artifact_amplitude, "synth");
  read_key(j, "artifact_band_lo", c.artifact_band_lo, "synth");
  read_key(j, "artifact_band_hi", c.artifact_band_hi, "synth");
  read_key(j, "stats_shift_scale", c.stats_shift_scale, "synth");
  read_key(j, "seed", c.seed, "synth");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"max_epochs", c.max_epochs},
                     {"batch_size", c.batch_size},
                     {"base_lr", c.base_lr},
                     {"final_lr", c.final_lr},
                     {"warmup_epochs", c.warmup_epochs},
                     {"weight_decay", c.weight_decay},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"adam_eps", c.adam_eps},
                     {"frontend_lr_scale", c.frontend_lr_scale},
                     {"seed", c.seed},
                     {"crop_frames", c.crop_frames}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  check_keys(j,
             {"max_epochs", "batch_size", "base_lr", "final_lr", "warmup_epochs", "weight_decay",
              "beta1", "beta2", "adam_eps", "frontend_lr_scale", "seed", "crop_frames"},
             "train");
  read_key(j, "max_epochs", c.max_epochs, "train");
  read_key(j, "batch_size", c.batch_size, "train");
  read_key(j, "base_lr", c.base_lr, "train");
  read_key(j, "final_lr", c.final_lr, "train");
  read_key(j, "warmup_epochs", c.warmup_epochs, "train");
  read_key(j, "weight_decay", c.weight_decay, "train");
  read_key(j, "beta1", c.beta1, "train");
  read_key(j, "beta2", c.beta2, "train");
  read_key(j, "adam_eps", c.adam_eps, "train");
  read_key(j, "frontend_lr_scale", c.frontend_lr_scale, "train");
  read_key(j, "seed", c.seed, "train");
  read_key(j, "crop_frames", c.crop_frames, "train");
}

void to_json(nlohmann::json& j, const FusionSpec& c) {
  j = nlohmann::json{{"systems", c.systems},
                     {"weights", c.weights},
                     {"normalize", c.normalize == FusionSpec::Norm::zscore ? "zscore" : "none"}};
}

void from_json(const nlohmann::json& j, FusionSpec& c) {
  check_keys(j, {"systems", "weights", "normalize"}, "fusion");
  read_key(j, "systems", c.systems, "fusion");
  read_key(j, "weights", c.weights, "fusion");
  if (j.contains("normalize")) {
    const std::string norm = j.at("normalize").get<std::string>();
    if (norm == "none") {
      c.normalize = FusionSpec::Norm::none;
    } else if (norm == "zscore") {
      c.normalize = FusionSpec::Norm::zscore;
    } else {
      throw ConfigError("config section \"fusion\": normalize must be \"none\" or \"zscore\"");
    }
  }
}

nlohmann::json default_run_config_json() {
  RunConfig defaults;
  nlohmann::json doc{{"seed", defaults.seed},
                     {"workdir", defaults.workdir},
                     {"manifest", defaults.manifest},
                     {"checkpoint", defaults.checkpoint},
                     {"synth", defaults.synth},
                     {"mhfa", defaults.mhfa},
                     {"train", defaults.train},
                     {"fusion", defaults.fusion}};
  // Section seeds are derived from the top-level seed unless a config or
  // override pins them, so the defaults document must not pin them itself.
  doc["synth"].erase("seed");
  doc["train"].erase("seed");
  return doc;
}

RunConfig parse_run_config(const nlohmann::json& doc) {
  check_keys(doc, {"seed", "workdir", "manifest", "checkpoint", "synth", "mhfa", "train", "fusion"},
             "(top level)");
  RunConfig cfg;
  read_key(doc, "seed", cfg.seed, "(top level)");
  read_key(doc, "workdir", cfg.workdir, "(top level)");
  read_key(doc, "manifest", cfg.manifest, "(top level)");
  read_key(doc, "checkpoint", cfg.checkpoint, "(top level)");
  if (doc.contains("synth")) cfg.synth = doc.at("synth").get<SynthConfig>();
  if (doc.contains("mhfa")) cfg.mhfa = doc.at("mhfa").get<MhfaConfig>();
  if (doc.contains("train")) cfg.train = doc.at("train").get<TrainConfig>();
  if (doc.contains("fusion")) cfg.fusion = doc.at("fusion").get<FusionSpec>();

  // Deterministic sub-seeding from the top-level seed, unless a section
  // pins its own seed explicitly.
  if (!doc.contains("synth") || !doc.at("synth").contains("seed")) {
    cfg.synth.seed = derive_seed(cfg.seed, "synth");
  }
  if (!doc.contains("train") || !doc.at("train").contains("seed")) {
    cfg.train.seed = derive_seed(cfg.seed, "train");
  }
  // The back-end adopts the synthetic front-end dimensions unless pinned.
  if (cfg.mhfa.L == 0) cfg.mhfa.L = cfg.synth.L;
  if (cfg.mhfa.D == 0) cfg.mhfa.D = cfg.synth.D;
  return cfg;
}

void apply_override(nlohmann::json& doc, const std::string& dotted_key, const std::string& value) {
  if (dotted_key.empty()) throw ConfigError("override: empty key");
  nlohmann::json* cursor = &doc;
  std::istringstream parts(dotted_key);
  std::string part;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) {
    if (part.empty()) throw ConfigError("override: malformed key \"" + dotted_key + "\"");
    path.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    cursor = &(*cursor)[path[i]];
    if (!cursor->is_object()) {
      throw ConfigError("override: \"" + path[i] + "\" in \"" + dotted_key +
                        "\" is not a config section");
    }
  }
  const nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
  (*cursor)[path.back()] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
}

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("config: cannot open for reading: " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config " + path + ": " + e.what());
  }
}

nlohmann::json merge_json(nlohmann::json base, const nlohmann::json& overlay) {
  if (!base.is_object() || !overlay.is_object()) return overlay;
  for (const auto& item : overlay.items()) {
    if (base.contains(item.key())) {
      base[item.key()] = merge_json(base[item.key()], item.value());
    } else {
      base[item.key()] = item.value();
    }
  }
  return base;
}

}  // namespace spoofdet
