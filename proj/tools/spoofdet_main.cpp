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

// spoofdet command-line front door. Every subcommand is a pure function of
// (config file, seed, flags); artifacts land under --workdir.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "spoofdet/checkpoint.hpp"
#include "spoofdet/config.hpp"
#include "spoofdet/error.hpp"
#include "spoofdet/eval.hpp"
#include "spoofdet/feature_io.hpp"
#include "spoofdet/model_check.hpp"
#include "spoofdet/synth.hpp"
#include "spoofdet/trainer.hpp"

namespace {

// Command-line misuse distinct from module failures: exits 2, not 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string workdir;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* workdir_opt = nullptr;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "JSON run configuration (merged over defaults)");
  flags.seed_opt = cmd->add_option("--seed", flags.seed, "top-level seed (overrides config)");
  flags.workdir_opt =
      cmd->add_option("--workdir", flags.workdir, "artifact directory (overrides config)");
  cmd->allow_extras();  // dotted section overrides, e.g. --train.base_lr 5e-4
}

// Interprets leftover tokens as dotted-key overrides ("--synth.L 4" or
// "--synth.L=4"). Anything else is a usage error.
std::vector<std::pair<std::string, std::string>> dotted_overrides(
    const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& tok = extras[i];
    if (tok.rfind("--", 0) != 0) throw UsageError("unexpected argument \"" + tok + "\"");
    std::string key = tok.substr(2);
    std::string value;
    const auto eq = key.find('=');
    if (eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    }
    if (key.find('.') == std::string::npos) throw UsageError("unknown flag --" + key);
    if (eq == std::string::npos) {
      if (i + 1 >= extras.size()) throw UsageError("override " + tok + " is missing a value");
      value = extras[++i];
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

struct ResolvedConfig {
  spoofdet::RunConfig cfg;
  nlohmann::json doc;
};

ResolvedConfig resolve_config(const CLI::App& cmd, const CommonFlags& flags) {
  nlohmann::json doc = spoofdet::default_run_config_json();
  if (!flags.config_path.empty()) {
    doc = spoofdet::merge_json(doc, spoofdet::load_json_file(flags.config_path));
  }
  for (const auto& [key, value] : dotted_overrides(cmd.remaining())) {
    spoofdet::apply_override(doc, key, value);
  }
  if (flags.seed_opt->count() > 0) doc["seed"] = flags.seed;
  if (flags.workdir_opt->count() > 0) doc["workdir"] = flags.workdir;
  return {spoofdet::parse_run_config(doc), std::move(doc)};
}

void archive_config(const nlohmann::json& doc, const std::string& workdir) {
  std::filesystem::create_directories(workdir);
  const std::string path = (std::filesystem::path(workdir) / "run_config.json").string();
  std::ofstream os(path, std::ios::trunc);
  os << doc.dump(2) << '\n';
  if (!os) throw spoofdet::IoError("cannot write " + path);
}

int run_synth(const CLI::App& cmd, const CommonFlags& flags) {
  ResolvedConfig rc = resolve_config(cmd, flags);
  const std::string out_dir = (std::filesystem::path(rc.cfg.workdir) / "data").string();
  const spoofdet::SynthResult result = spoofdet::synthesize_dataset(rc.cfg.synth, out_dir);
  rc.doc["manifest"] = result.manifest_path;  // so train/score can reuse the archive
  archive_config(rc.doc, rc.cfg.workdir);
  std::cout << "wrote " << result.manifest_path << " (" << result.manifest.size()
            << " utterances)\n";
  for (const spoofdet::GeneratorInfo& gen : result.generators) {
    char line[96];
    std::snprintf(line, sizeof(line), "  %-8s %-6s band std x%.3f", gen.id.c_str(),
                  gen.seen ? "seen" : "unseen", gen.stats_shift);
    std::cout << line << '\n';
  }
  return 0;
}

int run_train(const CLI::App& cmd, const CommonFlags& flags, const std::string& manifest_flag) {
  ResolvedConfig rc = resolve_config(cmd, flags);
  if (!manifest_flag.empty()) rc.doc["manifest"] = manifest_flag;
  std::string manifest = rc.doc.at("manifest").get<std::string>();
  if (manifest.empty()) {
    // Convention from `synth`: the dataset lives under <workdir>/data.
    manifest = (std::filesystem::path(rc.cfg.workdir) / "data" / "manifest.jsonl").string();
  }
  rc.doc["manifest"] = manifest;
  // Dims may come from the manifest's dataset rather than the synth section.
  spoofdet::RunConfig cfg = spoofdet::parse_run_config(rc.doc);
  if (cfg.mhfa.L == 0 || cfg.mhfa.D == 0) {
    const auto entries = spoofdet::load_manifest_file(manifest);
    if (!entries.empty()) {
      const auto stack = spoofdet::read_feature_stack_file(
          spoofdet::resolve_feature_path(manifest, entries.front()));
      if (cfg.mhfa.L == 0) cfg.mhfa.L = stack.L;
      if (cfg.mhfa.D == 0) cfg.mhfa.D = stack.D;
    }
  }
  archive_config(rc.doc, cfg.workdir);
  const std::string out_dir = (std::filesystem::path(cfg.workdir) / "train").string();
  const spoofdet::FitResult result = spoofdet::fit(manifest, cfg.mhfa, cfg.train, out_dir);
  char line[128];
  std::snprintf(line, sizeof(line), "best dev EER %.6f", result.best_dev_eer);
  std::cout << line << '\n'
            << "best checkpoint:  " << result.best_checkpoint << '\n'
            << "final checkpoint: " << result.final_checkpoint << '\n'
            << "log: " << result.log_path << '\n';
  return 0;
}

int run_score(const CLI::App& cmd, const CommonFlags& flags, const std::string& checkpoint_flag,
              const std::string& manifest_flag, const std::string& split,
              const std::string& out_flag) {
  ResolvedConfig rc = resolve_config(cmd, flags);
  const std::string ckpt_path = checkpoint_flag.empty() ? rc.cfg.checkpoint : checkpoint_flag;
  if (ckpt_path.empty()) throw spoofdet::ConfigError("score: no checkpoint given");
  const std::string manifest = manifest_flag.empty() ? rc.cfg.manifest : manifest_flag;
  if (manifest.empty()) throw spoofdet::ConfigError("score: no manifest given");

  const spoofdet::Checkpoint ckpt = spoofdet::load_checkpoint(ckpt_path);
  std::vector<spoofdet::ManifestEntry> entries;
  for (auto& e : spoofdet::load_manifest_file(manifest)) {
    if (e.split == split) entries.push_back(std::move(e));
  }
  if (entries.empty()) {
    throw spoofdet::ConfigError("score: split \"" + split + "\" has no entries in " + manifest);
  }
  const auto records = spoofdet::score_dataset(ckpt.params, ckpt.config, entries, manifest,
                                               rc.cfg.train.crop_frames);
  std::string out = out_flag;
  if (out.empty()) {
    out = (std::filesystem::path(rc.cfg.workdir) / "scores" / (split + ".txt")).string();
  }
  if (const auto dir = std::filesystem::path(out).parent_path(); !dir.empty()) {
    std::filesystem::create_directories(dir);
  }
  spoofdet::write_score_file(records, out);
  std::cout << "wrote " << out << " (" << records.size() << " records)\n";
  return 0;
}

int run_eer(const std::string& score_path) {
  const auto records = spoofdet::read_score_file(score_path);
  const spoofdet::EerResult r = spoofdet::compute_eer(records);
  char line[64];
  std::snprintf(line, sizeof(line), "EER %.6f", r.eer);
  std::cout << line << '\n';
  return 0;
}

int run_fuse(const CLI::App& cmd, const CommonFlags& flags,
             const std::vector<std::string>& systems_flag, const std::vector<double>& weights_flag,
             const std::string& normalize_flag, const std::string& out) {
  ResolvedConfig rc = resolve_config(cmd, flags);
  spoofdet::FusionSpec spec = rc.cfg.fusion;
  if (!systems_flag.empty()) spec.systems = systems_flag;
  if (!weights_flag.empty()) spec.weights = weights_flag;
  if (!normalize_flag.empty()) {
    if (normalize_flag == "none") {
      spec.normalize = spoofdet::FusionSpec::Norm::none;
    } else if (normalize_flag == "zscore") {
      spec.normalize = spoofdet::FusionSpec::Norm::zscore;
    } else {
      throw UsageError("--normalize must be none or zscore");
    }
  }
  if (spec.systems.empty()) throw spoofdet::ConfigError("fuse: no input score files given");
  std::vector<std::vector<spoofdet::ScoreRecord>> sets;
  sets.reserve(spec.systems.size());
  for (const std::string& path : spec.systems) {
    sets.push_back(spoofdet::read_score_file(path));
  }
  const auto fused = spoofdet::fuse_scores(spec, sets);
  if (const auto dir = std::filesystem::path(out).parent_path(); !dir.empty()) {
    std::filesystem::create_directories(dir);
  }
  spoofdet::write_score_file(fused, out);
  std::cout << "wrote " << out << " (" << fused.size() << " records)\n";
  return 0;
}

int run_gradcheck(const CLI::App& cmd, const CommonFlags& flags, bool fault) {
  const ResolvedConfig rc = resolve_config(cmd, flags);
  const spoofdet::GradCheckResult r = spoofdet::mhfa_grad_check(rc.cfg.seed, fault);
  char line[128];
  std::snprintf(line, sizeof(line), "max relative error %.6e (parameter %d, element %zu)",
                r.max_rel_error, r.worst_param, r.worst_elem);
  std::cout << line << '\n';
  const bool ok = fault ? (r.max_rel_error >= 0.3) : (r.max_rel_error <= 1e-4);
  if (!ok) {
    std::cerr << (fault ? "gradcheck: injected fault was not flagged\n"
                        : "gradcheck: gradients disagree with finite differences\n");
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"environmental-sound deepfake detection pipeline"};
  app.require_subcommand(1);

  CommonFlags synth_flags, train_flags, score_flags, fuse_flags, grad_flags;

  CLI::App* synth = app.add_subcommand("synth", "generate the synthetic layered-feature dataset");
  add_common_flags(synth, synth_flags);

  CLI::App* train = app.add_subcommand("train", "fit the detector; writes checkpoints and a log");
  add_common_flags(train, train_flags);
  std::string train_manifest;
  train->add_option("--manifest", train_manifest, "dataset manifest (JSONL)");

  CLI::App* score = app.add_subcommand("score", "score one split with a trained checkpoint");
  add_common_flags(score, score_flags);
  std::string score_checkpoint, score_manifest, score_split = "eval_seen", score_out;
  score->add_option("--checkpoint", score_checkpoint, "model checkpoint");
  score->add_option("--manifest", score_manifest, "dataset manifest (JSONL)");
  score->add_option("--split", score_split, "manifest split to score (default eval_seen)");
  score->add_option("--out", score_out, "output score file (default <workdir>/scores/<split>.txt)");

  CLI::App* eer = app.add_subcommand("eer", "print the equal error rate of a score file");
  std::string eer_scores;
  eer->add_option("scores", eer_scores, "score file")->required();

  CLI::App* fuse = app.add_subcommand("fuse", "combine score files into one fused score file");
  add_common_flags(fuse, fuse_flags);
  std::vector<std::string> fuse_systems;
  std::vector<double> fuse_weights;
  std::string fuse_normalize, fuse_out;
  fuse->add_option("systems", fuse_systems, "input score files");
  fuse->add_option("--weights", fuse_weights, "per-system fusion weights (default all 1)");
  fuse->add_option("--normalize", fuse_normalize, "per-system normalization: none|zscore");
  fuse->add_option("--out", fuse_out, "output score file")->required();

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference check of the full model gradient");
  add_common_flags(gradcheck, grad_flags);
  bool grad_fault = false;
  gradcheck->add_flag("--fault", grad_fault,
                      "inject a gradient fault; exits 0 only if the check flags it");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "spoofdet: " << e.what() << '\n' << "run with --help for usage\n";
    return 2;
  }

  try {
    if (synth->parsed()) return run_synth(*synth, synth_flags);
    if (train->parsed()) return run_train(*train, train_flags, train_manifest);
    if (score->parsed()) {
      return run_score(*score, score_flags, score_checkpoint, score_manifest, score_split,
                       score_out);
    }
    if (eer->parsed()) return run_eer(eer_scores);
    if (fuse->parsed()) {
      return run_fuse(*fuse, fuse_flags, fuse_systems, fuse_weights, fuse_normalize, fuse_out);
    }
    if (gradcheck->parsed()) return run_gradcheck(*gradcheck, grad_flags, grad_fault);
  } catch (const UsageError& e) {
    std::cerr << "spoofdet: " << e.what() << '\n' << "run with --help for usage\n";
    return 2;
  } catch (const spoofdet::Error& e) {
    std::cerr << "spoofdet: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "spoofdet: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
