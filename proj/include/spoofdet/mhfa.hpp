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

#include <string>
#include <vector>

#include "spoofdet/dsu.hpp"
#include "spoofdet/feature_io.hpp"
#include "spoofdet/rng.hpp"
#include "spoofdet/tensor.hpp"

namespace spoofdet {

/// Back-end architecture hyperparameters. Class indices are fixed:
/// spoof = 0, bonafide = 1 (matching Label).
struct MhfaConfig {
  int L = 0;      // front-end layers
  int D = 0;      // feature dim per layer
  int H = 32;     // attention heads
  int D_cmp = 128;  // compressed Key/Value width
  int E = 256;    // embedding dim
  bool dsu_enabled = false;
  DsuConfig dsu;
  bool adapter_enabled = false;

  void validate() const;
};

/// Every trainable tensor of the back-end. Heads share the full D_cmp value
/// stream, so the concatenated head outputs feeding W_fc have width H*D_cmp.
template <typename S>
struct MhfaParams {
  bool adapter_enabled = false;
  Tensor<S> w_k, w_v;    // [L] layer-aggregation logits for Key/Value
  Tensor<S> W_k, b_k;    // [D x D_cmp], [D_cmp]
  Tensor<S> W_v, b_v;    // [D x D_cmp], [D_cmp]
  Tensor<S> W_att;       // [D_cmp x H], no bias (shift-invariant under softmax)
  Tensor<S> W_fc, b_fc;  // [H*D_cmp x E], [E]
  Tensor<S> W_cls, b_cls;  // [E x 2], [2]
  Tensor<S> adapter_gamma, adapter_beta;  // [L x D] when adapter_enabled

  template <typename T>
  MhfaParams<T> cast() const {
    MhfaParams<T> out;
    out.adapter_enabled = adapter_enabled;
    out.w_k = w_k.template cast<T>();
    out.w_v = w_v.template cast<T>();
    out.W_k = W_k.template cast<T>();
    out.b_k = b_k.template cast<T>();
    out.W_v = W_v.template cast<T>();
    out.b_v = b_v.template cast<T>();
    out.W_att = W_att.template cast<T>();
    out.W_fc = W_fc.template cast<T>();
    out.b_fc = b_fc.template cast<T>();
    out.W_cls = W_cls.template cast<T>();
    out.b_cls = b_cls.template cast<T>();
    if (adapter_enabled) {
      out.adapter_gamma = adapter_gamma.template cast<T>();
      out.adapter_beta = adapter_beta.template cast<T>();
    }
    return out;
  }
};

/// Named view over the trainable tensors, in a fixed registry order (the
/// checkpoint and optimizer-state order). frontend marks the adapter group.
template <typename S>
struct ParamRef {
  std::string name;
  Tensor<S>* tensor;
  bool frontend;
};

template <typename S>
std::vector<ParamRef<S>> param_registry(MhfaParams<S>& params);

// Identity-start initialization: w_k = w_v = 0 (uniform layer weights),
// matrices ~ N(0, 1/fan_in), biases 0, adapter gamma = 1 / beta = 0.
template <typename S>
MhfaParams<S> init_params(const MhfaConfig& cfg, RngStream& rng);

// All-zero parameters of the right shapes (checkpoint loading target).
template <typename S>
MhfaParams<S> zero_params(const MhfaConfig& cfg);

// Softmax-weighted sum over layers: sum_l softmax(w)_l * X[l], as a plain
// tensor function for audits; the model records the same computation on its
// graph.
template <typename S>
Tensor<S> aggregate_layers(const FeatureStack& x, const Tensor<S>& w);

/// Node handles of one recorded forward pass, per batch instance.
template <typename S>
struct MhfaGraphOuts {
  std::vector<typename Graph<S>::NodeId> param_nodes;  // registry order
  std::vector<typename Graph<S>::NodeId> logits;       // each [1 x 2]
  std::vector<typename Graph<S>::NodeId> embeddings;   // each [1 x E]
  std::vector<typename Graph<S>::NodeId> attentions;   // each [T x H]
};

// Records the full forward pass for a batch on g. Pipeline per utterance:
// optional per-layer adapter affine; Key/Value layer aggregation; DSU on the
// aggregated Value stream (train mode only, across the whole batch); Key and
// Value projections; attention logits K*W_att softmaxed over TIME; per-head
// pooled vectors concatenated into the embedding; classifier logits.
template <typename S>
MhfaGraphOuts<S> build_mhfa_forward(Graph<S>& g, const std::vector<const FeatureStack*>& batch,
                                    const MhfaParams<S>& params, const MhfaConfig& cfg, Mode mode,
                                    RngStream& rng, bool track_grads);

// Same forward over parameter leaves already inserted into g, in registry
// order (11 nodes, or 13 with the adapter). Lets external drivers (the
// gradient checker) own the leaves.
template <typename S>
MhfaGraphOuts<S> build_mhfa_forward_with_params(
    Graph<S>& g, const std::vector<const FeatureStack*>& batch,
    const std::vector<typename Graph<S>::NodeId>& param_nodes, const MhfaConfig& cfg, Mode mode,
    RngStream& rng);

/// Forward + mean cross-entropy loss over the batch.
template <typename S>
struct MhfaBatchGraph {
  MhfaGraphOuts<S> outs;
  typename Graph<S>::NodeId log_probs;  // [B x 2]
  typename Graph<S>::NodeId loss;       // scalar
};

template <typename S>
MhfaBatchGraph<S> build_mhfa_loss(Graph<S>& g, const std::vector<const FeatureStack*>& batch,
                                  const std::vector<int>& labels, const MhfaParams<S>& params,
                                  const MhfaConfig& cfg, Mode mode, RngStream& rng,
                                  bool track_grads);

/// One-utterance forward returning values only.
template <typename S>
struct MhfaForwardResult {
  Tensor<S> logits;     // [2]
  Tensor<S> embedding;  // [E]
  Tensor<S> attention;  // [T x H]
};

template <typename S>
MhfaForwardResult<S> mhfa_forward(const FeatureStack& x, const MhfaParams<S>& params,
                                  const MhfaConfig& cfg, Mode mode, RngStream& rng);

}  // namespace spoofdet
