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

#include <utility>
#include <vector>

#include "spoofdet/rng.hpp"
#include "spoofdet/tensor.hpp"

namespace spoofdet {

enum class Mode { train, eval };

/// Distribution-uncertainty augmentation: with probability p per batch,
/// instance mean/std are jittered by Gaussian noise scaled by their
/// batch-level uncertainty, and the features are re-normalized to the
/// jittered statistics.
struct DsuConfig {
  double p = 0.5;
  double eps = 1e-6;  // stabilizes the instance std

  void validate() const;
};

template <typename S>
struct DsuStats {
  Tensor<S> mu;           // [B x C] instance means
  Tensor<S> sigma;        // [B x C] instance stds (eps-stabilized)
  Tensor<S> sigma_mu;     // [C] uncertainty (std over batch) of the means
  Tensor<S> sigma_sigma;  // [C] uncertainty of the stds
};

/// Test/audit hook: everything sampled and derived during one perturbation.
template <typename S>
struct DsuTrace {
  bool applied = false;
  DsuStats<S> stats;
  Tensor<S> eps_mu;       // [B x C]
  Tensor<S> eps_sigma;    // [B x C]
  Tensor<S> mu_tilde;     // [B x C]
  Tensor<S> sigma_tilde;  // [B x C]
};

// Instance statistics over the temporal axis of x [B x T x C]:
// mu[b,c] = mean_t x[b,t,c], sigma[b,c] = sqrt(population var + eps).
template <typename S>
std::pair<Tensor<S>, Tensor<S>> instance_stats(const Tensor<S>& x, double eps);

// The perturbation as a plain tensor function. In eval mode returns x
// without consuming randomness. In train mode draws one Bernoulli gate per
// call; when the gate stays closed, returns x unchanged. Otherwise draws
// eps_mu/eps_sigma ~ N(0,1) per (instance, channel) and re-normalizes:
//   out = ((x - mu)/sigma) * (sigma + eps_sigma*Sigma_sigma)
//                          + (mu + eps_mu*Sigma_mu).
// Batch uncertainties Sigma_* are population stds over the batch (no eps
// floor, so a single-instance batch degenerates to identity). The forced_*
// arguments replace the Gaussian draws (nothing is consumed from rng for
// them); trace, when given, receives all intermediate quantities.
template <typename S>
Tensor<S> dsu_perturb(const Tensor<S>& x, const DsuConfig& cfg, RngStream& rng, Mode mode,
                      DsuTrace<S>* trace = nullptr, const Tensor<S>* forced_eps_mu = nullptr,
                      const Tensor<S>* forced_eps_sigma = nullptr);

// Graph-recorded variant used inside the model, one [T x C] node per batch
// instance. Identical randomness consumption and arithmetic as the plain
// function; gradients flow through x and the instance stats while the
// sampled noise and Sigma_* enter as constants.
template <typename S>
std::vector<typename Graph<S>::NodeId> dsu_perturb_graph(
    Graph<S>& g, const std::vector<typename Graph<S>::NodeId>& instances, const DsuConfig& cfg,
    RngStream& rng, Mode mode);

}  // namespace spoofdet
