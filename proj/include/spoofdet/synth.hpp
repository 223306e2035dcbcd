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

#include <cstdint>
#include <string>
#include <vector>

#include "spoofdet/feature_io.hpp"

namespace spoofdet {

/// Configuration of the synthetic layered-feature corpus that stands in for
/// SSL front-end outputs at desk scale.
struct SynthConfig {
  int L = 8;
  int T_raw = 300;
  int D = 128;
  int n_train_per_class = 400;
  int n_eval_per_class = 100;  // also sizes the dev split
  int seen_generators = 2;
  int unseen_generators = 2;
  double artifact_amplitude = 0.5;
  int artifact_band_lo = 2;  // artifact layers are [lo, hi)
  int artifact_band_hi = 6;
  double stats_shift_scale = 0.8;
  std::uint64_t seed = 465217335919562969ULL;  // fixed reference-corpus seed

  void validate() const;
};

/// Per-generator ground truth, exposed so tests can audit the generative
/// process directly (artifact geometry, statistic shifts).
struct GeneratorInfo {
  std::string id;
  std::vector<double> artifact;  // unit-norm direction, length D
  double stats_shift = 0.0;      // the per-generator (1 + scale*u) factor
  bool seen = false;
};

struct SynthResult {
  std::vector<ManifestEntry> manifest;
  std::vector<GeneratorInfo> generators;
  std::string manifest_path;
};

// Generates the corpus under out_dir: feature files in out_dir/features/ and
// the manifest at out_dir/manifest.jsonl. Bonafide stacks are per-layer
// mixtures of a smooth latent; spoof stacks add a per-generator artifact
// direction on the configured layer band and scale those layers' per-channel
// std. Seen generators populate train/dev/eval_seen; unseen generators
// populate eval_unseen only. Splits are exactly class-balanced. The whole
// tree is a pure function of the config (byte-identical on rerun).
SynthResult synthesize_dataset(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace spoofdet
