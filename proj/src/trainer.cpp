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

#include "spoofdet/trainer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "spoofdet/checkpoint.hpp"
#include "spoofdet/error.hpp"
#include "spoofdet/eval.hpp"
#include "spoofdet/rng.hpp"

namespace spoofdet {

void TrainConfig::validate() const {
  if (max_epochs < 1) throw ConfigError("TrainConfig: max_epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (!(final_lr > 0.0) || !(final_lr <= base_lr)) {
    throw ConfigError("TrainConfig: need 0 < final_lr <= base_lr");
  }
  if (warmup_epochs < 0 || warmup_epochs >= max_epochs) {
    throw ConfigError("TrainConfig: warmup_epochs must lie in [0, max_epochs)");
  }
  if (weight_decay < 0.0) throw ConfigError("TrainConfig: weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("TrainConfig: beta1 and beta2 must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("TrainConfig: adam_eps must be positive");
  if (!(frontend_lr_scale > 0.0 && frontend_lr_scale <= 1.0)) {
    throw ConfigError("TrainConfig: frontend_lr_scale must lie in (0, 1]");
  }
  if (crop_frames < 1) throw ConfigError("TrainConfig: crop_frames must be >= 1");
}

double lr_at_step(long step, long total_steps, long warmup_steps, const TrainConfig& cfg) {
  if (step < 0 || step > total_steps) {
    throw ContractError("lr_at_step: step " + std::to_string(step) + " outside [0, " +
                        std::to_string(total_steps) + "]");
  }
  if (warmup_steps < 0 || warmup_steps >= total_steps) {
    throw ContractError("lr_at_step: warmup_steps must lie in [0, total_steps)");
  }
  if (step < warmup_steps) {
    return cfg.base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const double progress =
      static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  // Convex combination so the endpoints are exact: w = 1 at the warmup
  // boundary gives base_lr, w = 0 at total_steps gives final_lr.
  const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return cfg.base_lr * w + cfg.final_lr * (1.0 - w);
}

template <typename S>
ParamGroups build_param_groups(const std::vector<ParamRef<S>>& refs) {
  ParamGroups groups;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    (refs[i].frontend ? groups.frontend : groups.backend).push_back(i);
  }
  return groups;
}

template <typename S>
void adamw_step(const std::vector<ParamRef<S>>& refs, const std::vector<Tensor<S>>& grads,
                AdamState<S>& state, const std::vector<double>& group_lr,
                const TrainConfig& cfg) {
  if (grads.size() != refs.size() || group_lr.size() != refs.size() ||
      state.m.size() != refs.size() || state.v.size() != refs.size()) {
    throw ContractError("adamw_step: registry, gradients, state and lr lists must align");
  }
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (grads[i].shape != refs[i].tensor->shape) {
      throw DimensionError("adamw_step: gradient shape " + shape_str(grads[i].shape) +
                           " does not match parameter \"" + refs[i].name + "\" " +
                           shape_str(refs[i].tensor->shape));
    }
    if (!grads[i].all_finite()) {
      throw NumericError("adamw_step: non-finite gradient for parameter \"" + refs[i].name +
                         "\", step aborted");
    }
  }

  const long t = state.t + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const double lr = group_lr[i];
    Tensor<S>& p = *refs[i].tensor;
    for (std::size_t e = 0; e < p.data.size(); ++e) {
      const double g = static_cast<double>(grads[i].data[e]);
      const double m = cfg.beta1 * static_cast<double>(state.m[i].data[e]) + (1.0 - cfg.beta1) * g;
      const double v =
          cfg.beta2 * static_cast<double>(state.v[i].data[e]) + (1.0 - cfg.beta2) * g * g;
      state.m[i].data[e] = static_cast<S>(m);
      state.v[i].data[e] = static_cast<S>(v);
      const double m_hat = m / bc1;
      const double v_hat = v / bc2;
      const double p_pre = static_cast<double>(p.data[e]);
      p.data[e] = static_cast<S>(p_pre - lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps) -
                                 lr * cfg.weight_decay * p_pre);
    }
  }
  state.t = t;
}

namespace {

long ceil_div(long a, long b) { return (a + b - 1) / b; }

}  // namespace

FitResult fit(const std::string& manifest_path, const MhfaConfig& mhfa_cfg,
              const TrainConfig& train_cfg, const std::string& out_dir) {
  mhfa_cfg.validate();
  train_cfg.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("fit: cannot create output directory " + out_dir);

  const auto entries = load_manifest_file(manifest_path);
  std::vector<const ManifestEntry*> train_entries;
  std::vector<ManifestEntry> dev_entries;
  for (const ManifestEntry& e : entries) {
    if (e.split == "train") train_entries.push_back(&e);
    if (e.split == "dev") dev_entries.push_back(e);
  }
  if (train_entries.empty()) throw ConfigError("fit: no utterances in the train split");
  bool has_bona = false, has_spoof = false;
  for (const ManifestEntry* e : train_entries) {
    (e->label == Label::bonafide ? has_bona : has_spoof) = true;
  }
  if (!has_bona || !has_spoof) {
    throw ConfigError("fit: train split must contain both classes");
  }
  bool dev_bona = false, dev_spoof = false;
  for (const ManifestEntry& e : dev_entries) {
    (e.label == Label::bonafide ? dev_bona : dev_spoof) = true;
  }
  if (!dev_bona || !dev_spoof) {
    throw ConfigError("fit: dev split must contain both classes for per-epoch EER");
  }

  RngStream init_rng(derive_seed(train_cfg.seed, "init"));
  RngStream shuffle_rng(derive_seed(train_cfg.seed, "shuffle"));
  RngStream crop_rng(derive_seed(train_cfg.seed, "crop"));
  RngStream dsu_rng(derive_seed(train_cfg.seed, "dsu"));

  FitResult result;
  result.params = init_params<float>(mhfa_cfg, init_rng);
  const auto refs = param_registry(result.params);
  auto state = AdamState<float>::init(refs);

  const long n_train = static_cast<long>(train_entries.size());
  const long steps_per_epoch = ceil_div(n_train, train_cfg.batch_size);
  const long total_steps = static_cast<long>(train_cfg.max_epochs) * steps_per_epoch;
  const long warmup_steps = static_cast<long>(train_cfg.warmup_epochs) * steps_per_epoch;
  result.total_steps = total_steps;

  result.best_checkpoint = (fs::path(out_dir) / "best.ckpt").string();
  result.final_checkpoint = (fs::path(out_dir) / "final.ckpt").string();
  result.log_path = (fs::path(out_dir) / "train_log.jsonl").string();
  std::ofstream log_file(result.log_path);
  if (!log_file) throw IoError("fit: cannot open log for writing: " + result.log_path);

  std::vector<std::size_t> order(train_entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  long step = 0;
  for (int epoch = 0; epoch < train_cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    const double lr_epoch = lr_at_step(step, total_steps, warmup_steps, train_cfg);

    double loss_sum = 0.0;
    long loss_count = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(train_cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(train_cfg.batch_size));
      std::vector<FeatureStack> stacks;
      std::vector<const FeatureStack*> batch;
      std::vector<int> labels;
      stacks.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const ManifestEntry& entry = *train_entries[order[i]];
        const FeatureStack full =
            read_feature_stack_file(resolve_feature_path(manifest_path, entry));
        stacks.push_back(random_crop(full, train_cfg.crop_frames, crop_rng));
        labels.push_back(static_cast<int>(entry.label));
      }
      for (const FeatureStack& s : stacks) batch.push_back(&s);

      Graph<float> g;
      const auto built = build_mhfa_loss(g, batch, labels, result.params, mhfa_cfg, Mode::train,
                                         dsu_rng, true);
      g.backward(built.loss);
      std::vector<Tensor<float>> grads;
      grads.reserve(refs.size());
      for (std::size_t i = 0; i < refs.size(); ++i) {
        grads.push_back(g.grad(built.outs.param_nodes[i]));
      }

      const double lr = lr_at_step(step, total_steps, warmup_steps, train_cfg);
      std::vector<double> group_lr(refs.size());
      for (std::size_t i = 0; i < refs.size(); ++i) {
        group_lr[i] = refs[i].frontend ? train_cfg.frontend_lr_scale * lr : lr;
      }
      adamw_step(refs, grads, state, group_lr, train_cfg);

      loss_sum += static_cast<double>(g.value(built.loss).data[0]) *
                  static_cast<double>(end - start);
      loss_count += static_cast<long>(end - start);
      ++step;
    }

    const auto dev_records =
        score_dataset(result.params, mhfa_cfg, dev_entries, manifest_path, train_cfg.crop_frames);
    const double dev_eer = compute_eer(dev_records).eer;

    EpochLog el;
    el.epoch = epoch + 1;
    el.mean_loss = loss_sum / static_cast<double>(loss_count);
    el.dev_eer = dev_eer;
    el.lr_backend = lr_epoch;
    el.lr_frontend = train_cfg.frontend_lr_scale * lr_epoch;
    result.log.push_back(el);
    log_file << nlohmann::json{{"epoch", el.epoch},
                               {"mean_loss", el.mean_loss},
                               {"dev_eer", el.dev_eer},
                               {"lr_backend", el.lr_backend},
                               {"lr_frontend", el.lr_frontend}}
                    .dump()
             << "\n";
    log_file.flush();

    if (dev_eer < result.best_dev_eer || epoch == 0) {
      result.best_dev_eer = dev_eer;
      save_checkpoint(result.best_checkpoint, mhfa_cfg, result.params,
                      nlohmann::json{{"epoch", el.epoch}, {"dev_eer", dev_eer}});
    }
  }

  save_checkpoint(result.final_checkpoint, mhfa_cfg, result.params,
                  nlohmann::json{{"epoch", train_cfg.max_epochs},
                                 {"dev_eer", result.log.back().dev_eer}});
  if (!log_file) throw IoError("fit: log write failed: " + result.log_path);
  return result;
}

template ParamGroups build_param_groups(const std::vector<ParamRef<float>>&);
template ParamGroups build_param_groups(const std::vector<ParamRef<double>>&);
template void adamw_step(const std::vector<ParamRef<float>>&, const std::vector<Tensor<float>>&,
                         AdamState<float>&, const std::vector<double>&, const TrainConfig&);
template void adamw_step(const std::vector<ParamRef<double>>&, const std::vector<Tensor<double>>&,
                         AdamState<double>&, const std::vector<double>&, const TrainConfig&);

}  // namespace spoofdet
