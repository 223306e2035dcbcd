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

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "spoofdet/rng.hpp"

namespace spoofdet {

/// One utterance's layered frame features: L layers of T frames of D
/// channels, stored layer-major then time then channel.
struct FeatureStack {
  int L = 0;
  int T = 0;
  int D = 0;
  std::vector<float> values;

  FeatureStack() = default;
  FeatureStack(int layers, int frames, int dim);

  float& at(int l, int t, int d) {
    return values[(static_cast<std::size_t>(l) * static_cast<std::size_t>(T) +
                   static_cast<std::size_t>(t)) *
                      static_cast<std::size_t>(D) +
                  static_cast<std::size_t>(d)];
  }
  const float& at(int l, int t, int d) const {
    return values[(static_cast<std::size_t>(l) * static_cast<std::size_t>(T) +
                   static_cast<std::size_t>(t)) *
                      static_cast<std::size_t>(D) +
                  static_cast<std::size_t>(d)];
  }

  // Enforces L,T,D >= 1, value count == L*T*D, and all-finite values.
  void validate() const;
};

// ESDF v1: magic "ESDF" | version u32=1 | L u32 | T u32 | D u32 | dtype
// u32 (0 = 32-bit float) | payload of L*T*D little-endian floats.
// Returns the total byte count written.
std::size_t write_feature_stack(const FeatureStack& stack, std::ostream& dest);
std::size_t write_feature_stack_file(const FeatureStack& stack, const std::string& path);

FeatureStack read_feature_stack(std::istream& src);
FeatureStack read_feature_stack_file(const std::string& path);

enum class Label : int { spoof = 0, bonafide = 1 };

std::string label_name(Label label);
Label parse_label(const std::string& name);

struct ManifestEntry {
  std::string utt_id;
  std::string path;  // feature file, relative to the manifest's directory
  Label label = Label::spoof;
  std::string generator_id;  // "-" for bonafide
  std::string split;         // train | dev | eval_seen | eval_unseen
};

std::vector<ManifestEntry> load_manifest(std::istream& src);
std::vector<ManifestEntry> load_manifest_file(const std::string& path);
void write_manifest(const std::vector<ManifestEntry>& entries, std::ostream& dest);
void write_manifest_file(const std::vector<ManifestEntry>& entries, const std::string& path);

// Resolves an entry's feature path against the directory of its manifest.
std::string resolve_feature_path(const std::string& manifest_path, const ManifestEntry& entry);

// Fixed-duration cropping. One offset is drawn per call and shared across
// all layers. T > t_target: contiguous window at a uniform offset in
// [0, T - t_target]. T == t_target: identity (no random draw). T < t_target:
// wrap-pad by repeating frames from frame 0 until t_target frames.
FeatureStack random_crop(const FeatureStack& stack, int t_target, RngStream& rng);

// Deterministic variant for evaluation: the window starts at
// floor((T - t_target) / 2); the wrap rule for short clips is identical.
FeatureStack center_crop(const FeatureStack& stack, int t_target);

}  // namespace spoofdet
