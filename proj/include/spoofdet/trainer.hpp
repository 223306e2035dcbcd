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

#include "spoofdet/mhfa.hpp"
#include "spoofdet/tensor.hpp"

namespace spoofdet {

/// Optimization recipe: AdamW with decoupled weight decay, two parameter
/// groups (backend, frontend-adapter at 0.05x), linear warmup then cosine
/// annealing, fixed-duration random crops, deterministic seeding.
struct TrainConfig {
  int max_epochs = 8;
  int batch_size = 128;  // desk-scale runs typically override this downward
  double base_lr = 5e-4;
  double final_lr = 1e-5;
  int warmup_epochs = 2;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double frontend_lr_scale = 0.05;
  std::uint64_t seed = 0;
  int crop_frames = 200;  // 4 s at 50 frames/s

  void validate() const;
};

// Scheduled backend learning rate. Linear warmup: step < warmup_steps gives
// base_lr * (step+1) / warmup_steps. Cosine annealing afterwards reaches
// base_lr exactly at the warmup boundary and final_lr exactly at total_steps.
double lr_at_step(long step, long total_steps, long warmup_steps, const TrainConfig& cfg);

/// Adam moments per parameter tensor, in registry order, plus the shared
/// step counter.
template <typename S>
struct AdamState {
  std::vector<Tensor<S>> m;
  std::vector<Tensor<S>> v;
  long t = 0;

  template <typename ParamRange>
  static AdamState init(const ParamRange& refs) {
    AdamState s;
    for (const auto& ref : refs) {
      s.m.push_back(Tensor<S>::zeros(ref.tensor->shape));
      s.v.push_back(Tensor<S>::zeros(ref.tensor->shape));
    }
    return s;
  }
};

/// Index sets into the parameter registry.
struct ParamGroups {
  std::vector<std::size_t> backend;
  std::vector<std::size_t> frontend;
};

template <typename S>
ParamGroups build_param_groups(const std::vector<ParamRef<S>>& refs);

// One AdamW update over all registry tensors. group_lr must hold one
// learning rate per registry entry (already including the frontend scale).
// Decay is decoupled and uses the pre-update parameter value. A non-finite
// gradient aborts the step (no tensor mutated) with an error naming the
// parameter.
template <typename S>
void adamw_step(const std::vector<ParamRef<S>>& refs, const std::vector<Tensor<S>>& grads,
                AdamState<S>& state, const std::vector<double>& group_lr,
                const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double dev_eer = 0.0;
  double lr_backend = 0.0;
  double lr_frontend = 0.0;
};

struct FitResult {
  MhfaParams<float> params;  // final parameters
  std::vector<EpochLog> log;
  std::string best_checkpoint;
  std::string final_checkpoint;
  std::string log_path;
  double best_dev_eer = 1.0;
  long total_steps = 0;
};

// Full training run: per-epoch seeded shuffling, random crops, train-mode
// forward (DSU active when configured), backward, AdamW with the scheduled
// learning rate; per-epoch dev scoring; best-dev and final checkpoints plus
// a JSON-lines log under out_dir.
FitResult fit(const std::string& manifest_path, const MhfaConfig& mhfa_cfg,
              const TrainConfig& train_cfg, const std::string& out_dir);

}  // namespace spoofdet
