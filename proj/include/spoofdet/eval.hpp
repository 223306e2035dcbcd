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

#include <iosfwd>
#include <string>
#include <vector>

#include "spoofdet/feature_io.hpp"
#include "spoofdet/mhfa.hpp"

namespace spoofdet {

/// One utterance's detection outcome. Higher score = more bonafide; the
/// score is logit(bonafide) - logit(spoof), a log-likelihood-ratio style
/// quantity.
struct ScoreRecord {
  std::string utt_id;
  Label label = Label::spoof;
  std::string generator_id;
  double score = 0.0;
};

/// Score-level fusion recipe across systems.
struct FusionSpec {
  enum class Norm { none, zscore };

  std::vector<std::string> systems;  // score-file paths (informational)
  std::vector<double> weights;      // empty = all ones
  Norm normalize = Norm::none;

  void validate(std::size_t n_systems) const;
};

// Scores every entry with an eval-mode forward (DSU bypassed) on a centered
// crop of crop_frames frames. manifest_path anchors relative feature paths.
std::vector<ScoreRecord> score_dataset(const MhfaParams<float>& params, const MhfaConfig& cfg,
                                       const std::vector<ManifestEntry>& entries,
                                       const std::string& manifest_path, int crop_frames);

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

// Exact threshold sweep over the distinct scores plus an above-maximum
// sentinel. FAR(th) = fraction of spoof scores >= th, FRR(th) = fraction of
// bonafide scores < th; the result is (FAR+FRR)/2 at the threshold
// minimizing |FAR-FRR| (smallest such threshold on ties).
EerResult compute_eer(const std::vector<ScoreRecord>& records);

// Weighted per-utterance score combination, optionally z-normalizing each
// system first. All systems must cover the same utt_id set with consistent
// labels; output order follows the first system.
std::vector<ScoreRecord> fuse_scores(const FusionSpec& spec,
                                     const std::vector<std::vector<ScoreRecord>>& systems);

// Score file: one line per utterance, "utt_id label generator score", score
// printed with 9 significant digits.
void write_score_file(const std::vector<ScoreRecord>& records, std::ostream& dest);
void write_score_file(const std::vector<ScoreRecord>& records, const std::string& path);
std::vector<ScoreRecord> read_score_file(std::istream& src);
std::vector<ScoreRecord> read_score_file(const std::string& path);

}  // namespace spoofdet
