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

#include "spoofdet/synth.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "spoofdet/error.hpp"
#include "spoofdet/rng.hpp"

namespace spoofdet {

namespace {

// Latent dimensionality of the smooth per-utterance trajectory; kept well
// below D so bonafide features occupy a low-dimensional subspace and
// generator artifacts are (generically) off-manifold directions.
int latent_dim(const SynthConfig& cfg) { return std::min(cfg.D, 16); }

constexpr double kWalkStartStd = 0.1;
constexpr double kWalkStepStd = 0.03;
constexpr double kMixNoiseStd = 0.1;
constexpr double kMaxArtifactCos = 0.5;
constexpr int kMaxArtifactAttempts = 10000;

bool distinct_from(const std::vector<double>& a, const std::vector<std::vector<double>>& accepted) {
  for (const std::vector<double>& other : accepted) {
    double cos = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) cos += a[i] * other[i];
    if (std::abs(cos) >= kMaxArtifactCos) return false;
  }
  return true;
}

[[noreturn]] void throw_artifact_exhausted() {
  throw ContractError(
      "synthesize_dataset: could not draw a sufficiently distinct artifact vector after " +
      std::to_string(kMaxArtifactAttempts) + " attempts (D too small for this many generators)");
}

bool normalize_vec(std::vector<double>& a) {
  double norm_sq = 0.0;
  for (double v : a) norm_sq += v * v;
  const double norm = std::sqrt(norm_sq);
  if (norm == 0.0) return false;
  for (double& v : a) v /= norm;
  return true;
}

std::vector<double> draw_artifact(RngStream& rng, int d,
                                  const std::vector<std::vector<double>>& accepted) {
  for (int attempt = 0; attempt < kMaxArtifactAttempts; ++attempt) {
    std::vector<double> a(static_cast<std::size_t>(d));
    for (double& v : a) v = rng.normal();
    if (!normalize_vec(a)) continue;
    if (distinct_from(a, accepted)) return a;
  }
  throw_artifact_exhausted();
}

// Unseen generators come from the same algorithm family as the seen ones, so
// their artifact directions share part of the seen span; with fully
// independent draws (near-orthogonal in high D) nothing could transfer and
// generalization to unseen generators would be unmeasurable by construction.
// kappa sets the overlap strength against a fresh random unit direction; the
// pairwise-distinctness bound still applies, with rejection as the backstop.
constexpr double kUnseenOverlapKappa = 0.45;

std::vector<double> draw_overlapping_artifact(RngStream& rng, int d,
                                              const std::vector<double>& seen_mix,
                                              const std::vector<std::vector<double>>& accepted) {
  for (int attempt = 0; attempt < kMaxArtifactAttempts; ++attempt) {
    std::vector<double> a(static_cast<std::size_t>(d));
    for (double& v : a) v = rng.normal();
    if (!normalize_vec(a)) continue;
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] += kUnseenOverlapKappa * seen_mix[i];
    }
    if (!normalize_vec(a)) continue;
    if (distinct_from(a, accepted)) return a;
  }
  throw_artifact_exhausted();
}

// Fills a bonafide-style stack: per layer, B_l = s * M_l + noise, where s is
// a T x D_base Gaussian random walk over time and M_l are the dataset-fixed
// mixing maps (D_base x D, laid out row-major).
void fill_bonafide(const SynthConfig& cfg, const std::vector<std::vector<double>>& mixing,
                   RngStream& rng, std::vector<double>& out) {
  const int d_base = latent_dim(cfg);
  std::vector<double> latent(static_cast<std::size_t>(cfg.T_raw) *
                             static_cast<std::size_t>(d_base));
  for (int j = 0; j < d_base; ++j) {
    latent[static_cast<std::size_t>(j)] = kWalkStartStd * rng.normal();
  }
  for (int t = 1; t < cfg.T_raw; ++t) {
    for (int j = 0; j < d_base; ++j) {
      latent[static_cast<std::size_t>(t) * static_cast<std::size_t>(d_base) +
             static_cast<std::size_t>(j)] =
          latent[static_cast<std::size_t>(t - 1) * static_cast<std::size_t>(d_base) +
                 static_cast<std::size_t>(j)] +
          kWalkStepStd * rng.normal();
    }
  }
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMat> latent_mat(latent.data(), cfg.T_raw, d_base);
  for (int l = 0; l < cfg.L; ++l) {
    const std::vector<double>& m = mixing[static_cast<std::size_t>(l)];
    const Eigen::Map<const RowMat> mix_mat(m.data(), d_base, cfg.D);
    Eigen::Map<RowMat> layer(
        out.data() + static_cast<std::size_t>(l) * static_cast<std::size_t>(cfg.T_raw) *
                         static_cast<std::size_t>(cfg.D),
        cfg.T_raw, cfg.D);
    layer.noalias() = latent_mat * mix_mat;
    for (int t = 0; t < cfg.T_raw; ++t) {
      for (int d = 0; d < cfg.D; ++d) {
        layer(t, d) += kMixNoiseStd * rng.normal();
      }
    }
  }
}

void apply_generator(const SynthConfig& cfg, const GeneratorInfo& gen, std::vector<double>& x) {
  // Constant artifact direction added to every frame of the band layers.
  for (int l = cfg.artifact_band_lo; l < cfg.artifact_band_hi; ++l) {
    for (int t = 0; t < cfg.T_raw; ++t) {
      for (int d = 0; d < cfg.D; ++d) {
        x[(static_cast<std::size_t>(l) * static_cast<std::size_t>(cfg.T_raw) +
           static_cast<std::size_t>(t)) *
              static_cast<std::size_t>(cfg.D) +
          static_cast<std::size_t>(d)] +=
            cfg.artifact_amplitude * gen.artifact[static_cast<std::size_t>(d)];
      }
    }
  }
  // Per-channel std scaling around the channel mean on the same layers.
  for (int l = cfg.artifact_band_lo; l < cfg.artifact_band_hi; ++l) {
    for (int d = 0; d < cfg.D; ++d) {
      double mean = 0.0;
      for (int t = 0; t < cfg.T_raw; ++t) {
        mean += x[(static_cast<std::size_t>(l) * static_cast<std::size_t>(cfg.T_raw) +
                   static_cast<std::size_t>(t)) *
                      static_cast<std::size_t>(cfg.D) +
                  static_cast<std::size_t>(d)];
      }
      mean /= cfg.T_raw;
      for (int t = 0; t < cfg.T_raw; ++t) {
        double& v = x[(static_cast<std::size_t>(l) * static_cast<std::size_t>(cfg.T_raw) +
                       static_cast<std::size_t>(t)) *
                          static_cast<std::size_t>(cfg.D) +
                      static_cast<std::size_t>(d)];
        v = mean + (v - mean) * gen.stats_shift;
      }
    }
  }
}

struct UttPlan {
  std::string utt_id;
  std::string split;
  Label label;
  int generator_index = -1;  // into SynthResult::generators, -1 for bonafide
};

std::string utt_name(const std::string& split, Label label, int idx) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d", idx);
  return split + (label == Label::bonafide ? "_bona_" : "_spoof_") + buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (L < 1 || T_raw < 1 || D < 1 || n_train_per_class < 1 || n_eval_per_class < 1 ||
      seen_generators < 1 || unseen_generators < 1) {
    throw ConfigError("SynthConfig: all counts must be >= 1");
  }
  if (artifact_amplitude < 0.0) {
    throw ConfigError("SynthConfig: artifact_amplitude must be >= 0");
  }
  if (artifact_band_lo < 0 || artifact_band_hi > L || artifact_band_lo >= artifact_band_hi) {
    throw ConfigError("SynthConfig: artifact layer band [" + std::to_string(artifact_band_lo) +
                      ", " + std::to_string(artifact_band_hi) + ") must lie within [0, " +
                      std::to_string(L) + ") and be non-empty");
  }
  if (stats_shift_scale < 0.0) {
    throw ConfigError("SynthConfig: stats_shift_scale must be >= 0");
  }
}

SynthResult synthesize_dataset(const SynthConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  const fs::path feature_dir = root / "features";
  std::error_code ec;
  fs::create_directories(feature_dir, ec);
  if (ec) throw IoError("synthesize_dataset: cannot create " + feature_dir.string());

  // Dataset-level draws, in a fixed order: mixing maps, artifact vectors
  // (seen first), per-generator statistic shifts.
  RngStream dataset_rng(derive_seed(cfg.seed, "dataset"));
  const int d_base = latent_dim(cfg);
  std::vector<std::vector<double>> mixing;
  const double mix_scale = 1.0 / std::sqrt(static_cast<double>(d_base));
  for (int l = 0; l < cfg.L; ++l) {
    std::vector<double> m(static_cast<std::size_t>(d_base) * static_cast<std::size_t>(cfg.D));
    for (double& v : m) v = mix_scale * dataset_rng.normal();
    mixing.push_back(std::move(m));
  }

  SynthResult result;
  std::vector<std::vector<double>> accepted;
  for (int gi = 0; gi < cfg.seen_generators; ++gi) {
    GeneratorInfo gen;
    gen.seen = true;
    gen.id = "gen_s" + std::to_string(gi);
    gen.artifact = draw_artifact(dataset_rng, cfg.D, accepted);
    accepted.push_back(gen.artifact);
    result.generators.push_back(std::move(gen));
  }
  std::vector<double> seen_mix(static_cast<std::size_t>(cfg.D), 0.0);
  for (const std::vector<double>& a : accepted) {
    for (std::size_t i = 0; i < seen_mix.size(); ++i) seen_mix[i] += a[i];
  }
  const bool have_mix = normalize_vec(seen_mix);
  for (int gi = 0; gi < cfg.unseen_generators; ++gi) {
    GeneratorInfo gen;
    gen.seen = false;
    gen.id = "gen_u" + std::to_string(gi);
    gen.artifact = have_mix ? draw_overlapping_artifact(dataset_rng, cfg.D, seen_mix, accepted)
                            : draw_artifact(dataset_rng, cfg.D, accepted);
    accepted.push_back(gen.artifact);
    result.generators.push_back(std::move(gen));
  }
  for (GeneratorInfo& gen : result.generators) {
    gen.stats_shift = 1.0 + cfg.stats_shift_scale * dataset_rng.uniform(-1.0, 1.0);
  }

  // Utterance plan: per split, bonafide then spoof, spoof generators
  // assigned round-robin within the allowed pool.
  std::vector<UttPlan> plan;
  auto add_split = [&](const std::string& split, int per_class, bool seen_pool) {
    const int pool_base = seen_pool ? 0 : cfg.seen_generators;
    const int pool_size = seen_pool ? cfg.seen_generators : cfg.unseen_generators;
    for (int i = 0; i < per_class; ++i) {
      plan.push_back({utt_name(split, Label::bonafide, i), split, Label::bonafide, -1});
    }
    for (int i = 0; i < per_class; ++i) {
      plan.push_back(
          {utt_name(split, Label::spoof, i), split, Label::spoof, pool_base + i % pool_size});
    }
  };
  add_split("train", cfg.n_train_per_class, true);
  add_split("dev", cfg.n_eval_per_class, true);
  add_split("eval_seen", cfg.n_eval_per_class, true);
  add_split("eval_unseen", cfg.n_eval_per_class, false);

  std::vector<double> work(static_cast<std::size_t>(cfg.L) * static_cast<std::size_t>(cfg.T_raw) *
                           static_cast<std::size_t>(cfg.D));
  for (const UttPlan& u : plan) {
    RngStream utt_rng(derive_seed(cfg.seed, "utt:" + u.utt_id));
    fill_bonafide(cfg, mixing, utt_rng, work);
    if (u.generator_index >= 0) {
      apply_generator(cfg, result.generators[static_cast<std::size_t>(u.generator_index)], work);
    }
    FeatureStack stack(cfg.L, cfg.T_raw, cfg.D);
    for (std::size_t i = 0; i < work.size(); ++i) {
      stack.values[i] = static_cast<float>(work[i]);
    }
    const std::string rel_path = "features/" + u.utt_id + ".esdf";
    write_feature_stack_file(stack, (root / rel_path).string());
    ManifestEntry entry;
    entry.utt_id = u.utt_id;
    entry.path = rel_path;
    entry.label = u.label;
    entry.generator_id =
        u.generator_index >= 0
            ? result.generators[static_cast<std::size_t>(u.generator_index)].id
            : "-";
    entry.split = u.split;
    result.manifest.push_back(std::move(entry));
  }

  result.manifest_path = (root / "manifest.jsonl").string();
  write_manifest_file(result.manifest, result.manifest_path);
  return result;
}

}  // namespace spoofdet
