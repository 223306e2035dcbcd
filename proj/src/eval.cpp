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

#include "spoofdet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "spoofdet/error.hpp"

namespace spoofdet {

void FusionSpec::validate(std::size_t n_systems) const {
  if (n_systems == 0) throw ContractError("fuse_scores: no systems given");
  if (!weights.empty() && weights.size() != n_systems) {
    throw ConfigError("FusionSpec: " + std::to_string(weights.size()) + " weights for " +
                      std::to_string(n_systems) + " systems");
  }
  if (!weights.empty()) {
    bool any_nonzero = false;
    double sum = 0.0;
    for (double w : weights) {
      any_nonzero = any_nonzero || w != 0.0;
      sum += w;
    }
    if (!any_nonzero) throw ConfigError("FusionSpec: all weights are zero");
    if (sum == 0.0) throw ConfigError("FusionSpec: weights sum to zero");
  }
}

std::vector<ScoreRecord> score_dataset(const MhfaParams<float>& params, const MhfaConfig& cfg,
                                       const std::vector<ManifestEntry>& entries,
                                       const std::string& manifest_path, int crop_frames) {
  std::vector<ScoreRecord> records;
  records.reserve(entries.size());
  RngStream unused_rng(0);  // eval-mode forward consumes no randomness
  for (const ManifestEntry& entry : entries) {
    const FeatureStack stack = read_feature_stack_file(resolve_feature_path(manifest_path, entry));
    const FeatureStack cropped = center_crop(stack, crop_frames);
    MhfaForwardResult<float> fwd;
    try {
      fwd = mhfa_forward(cropped, params, cfg, Mode::eval, unused_rng);
    } catch (const DimensionError& e) {
      throw DimensionError("scoring \"" + entry.utt_id + "\": " + e.what());
    }
    ScoreRecord rec;
    rec.utt_id = entry.utt_id;
    rec.label = entry.label;
    rec.generator_id = entry.generator_id;
    rec.score = static_cast<double>(fwd.logits.data[1]) - static_cast<double>(fwd.logits.data[0]);
    records.push_back(std::move(rec));
  }
  return records;
}

EerResult compute_eer(const std::vector<ScoreRecord>& records) {
  std::vector<double> bona, spoof;
  for (const ScoreRecord& r : records) {
    if (!std::isfinite(r.score)) {
      throw NumericError("compute_eer: non-finite score for \"" + r.utt_id + "\"");
    }
    (r.label == Label::bonafide ? bona : spoof).push_back(r.score);
  }
  if (bona.empty() || spoof.empty()) {
    throw ContractError("compute_eer: need at least one record of each class");
  }
  std::sort(bona.begin(), bona.end());
  std::sort(spoof.begin(), spoof.end());

  // Candidate thresholds: each distinct score plus one sentinel above the
  // maximum (the reject-everything operating point).
  std::vector<double> candidates;
  candidates.reserve(bona.size() + spoof.size() + 1);
  candidates.insert(candidates.end(), bona.begin(), bona.end());
  candidates.insert(candidates.end(), spoof.begin(), spoof.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  candidates.push_back(candidates.back() + 1.0);

  EerResult best;
  double best_diff = -1.0;
  for (double th : candidates) {
    const auto n_spoof_accepted =
        spoof.end() - std::lower_bound(spoof.begin(), spoof.end(), th);  // score >= th
    const auto n_bona_rejected =
        std::lower_bound(bona.begin(), bona.end(), th) - bona.begin();  // score < th
    const double far = static_cast<double>(n_spoof_accepted) / static_cast<double>(spoof.size());
    const double frr = static_cast<double>(n_bona_rejected) / static_cast<double>(bona.size());
    const double diff = std::abs(far - frr);
    if (best_diff < 0.0 || diff < best_diff) {  // ties keep the smaller threshold
      best_diff = diff;
      best.eer = 0.5 * (far + frr);
      best.threshold = th;
    }
  }
  return best;
}

std::vector<ScoreRecord> fuse_scores(const FusionSpec& spec,
                                     const std::vector<std::vector<ScoreRecord>>& systems) {
  spec.validate(systems.size());
  std::vector<double> weights = spec.weights;
  if (weights.empty()) weights.assign(systems.size(), 1.0);
  double weight_sum = 0.0;
  for (double w : weights) weight_sum += w;

  const std::vector<ScoreRecord>& first = systems[0];
  std::map<std::string, std::size_t> order;
  for (std::size_t i = 0; i < first.size(); ++i) {
    if (!order.emplace(first[i].utt_id, i).second) {
      throw IntegrityError("fuse_scores: duplicate utt_id \"" + first[i].utt_id +
                           "\" in system 0");
    }
  }

  // Per-system aligned score columns, optionally z-normalized.
  std::vector<std::vector<double>> columns(systems.size(),
                                           std::vector<double>(first.size(), 0.0));
  for (std::size_t si = 0; si < systems.size(); ++si) {
    const std::vector<ScoreRecord>& sys = systems[si];
    std::vector<bool> covered(first.size(), false);
    for (const ScoreRecord& r : sys) {
      const auto it = order.find(r.utt_id);
      if (it == order.end()) {
        throw IntegrityError("fuse_scores: system " + std::to_string(si) + " has utt_id \"" +
                             r.utt_id + "\" missing from system 0");
      }
      if (covered[it->second]) {
        throw IntegrityError("fuse_scores: duplicate utt_id \"" + r.utt_id + "\" in system " +
                             std::to_string(si));
      }
      if (first[it->second].label != r.label) {
        throw IntegrityError("fuse_scores: label disagreement for \"" + r.utt_id +
                             "\" between system 0 and system " + std::to_string(si));
      }
      covered[it->second] = true;
      columns[si][it->second] = r.score;
    }
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < covered.size(); ++i) {
      if (!covered[i]) missing.push_back(first[i].utt_id);
    }
    if (!missing.empty()) {
      std::string joined;
      for (const std::string& id : missing) joined += (joined.empty() ? "" : ", ") + id;
      throw IntegrityError("fuse_scores: system " + std::to_string(si) +
                           " is missing utt_ids: " + joined);
    }
    if (spec.normalize == FusionSpec::Norm::zscore) {
      double mean = 0.0;
      for (double v : columns[si]) mean += v;
      mean /= static_cast<double>(columns[si].size());
      double var = 0.0;
      for (double v : columns[si]) var += (v - mean) * (v - mean);
      const double std_dev = std::sqrt(var / static_cast<double>(columns[si].size()));
      for (double& v : columns[si]) v = std_dev > 0.0 ? (v - mean) / std_dev : 0.0;
    }
  }

  std::vector<ScoreRecord> fused = first;
  for (std::size_t i = 0; i < fused.size(); ++i) {
    double acc = 0.0;
    for (std::size_t si = 0; si < systems.size(); ++si) acc += weights[si] * columns[si][i];
    fused[i].score = acc / weight_sum;
  }
  return fused;
}

void write_score_file(const std::vector<ScoreRecord>& records, std::ostream& dest) {
  char buf[64];
  for (const ScoreRecord& r : records) {
    std::snprintf(buf, sizeof(buf), "%.9g", r.score);
    dest << r.utt_id << " " << label_name(r.label) << " " << r.generator_id << " " << buf << "\n";
  }
  if (!dest) throw IoError("score file: write failed");
}

void write_score_file(const std::vector<ScoreRecord>& records, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("score file: cannot open for writing: " + path);
  write_score_file(records, os);
}

std::vector<ScoreRecord> read_score_file(std::istream& src) {
  std::vector<ScoreRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(src, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    ScoreRecord rec;
    std::string label_str, score_str, extra;
    if (!(fields >> rec.utt_id >> label_str >> rec.generator_id >> score_str)) {
      throw ParseError("score file line " + std::to_string(line_no) +
                       ": expected \"utt_id label generator score\"");
    }
    if (fields >> extra) {
      throw ParseError("score file line " + std::to_string(line_no) + ": trailing content \"" +
                       extra + "\"");
    }
    try {
      rec.label = parse_label(label_str);
    } catch (const ParseError& e) {
      throw ParseError("score file line " + std::to_string(line_no) + ": " + e.what());
    }
    std::size_t consumed = 0;
    try {
      rec.score = std::stod(score_str, &consumed);
    } catch (const std::exception&) {
      consumed = std::string::npos;
    }
    if (consumed != score_str.size() || !std::isfinite(rec.score)) {
      throw ParseError("score file line " + std::to_string(line_no) + ": bad score \"" +
                       score_str + "\"");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<ScoreRecord> read_score_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("score file: cannot open for reading: " + path);
  return read_score_file(is);
}

}  // namespace spoofdet
