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

#include "spoofdet/mhfa.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "spoofdet/error.hpp"

namespace spoofdet {

void MhfaConfig::validate() const {
  if (L < 1 || D < 1 || H < 1 || D_cmp < 1 || E < 1) {
    throw ConfigError("MhfaConfig: L, D, H, D_cmp, E must all be >= 1");
  }
  dsu.validate();
}

template <typename S>
std::vector<ParamRef<S>> param_registry(MhfaParams<S>& params) {
  std::vector<ParamRef<S>> refs = {
      {"w_k", &params.w_k, false},       {"w_v", &params.w_v, false},
      {"W_k", &params.W_k, false},       {"b_k", &params.b_k, false},
      {"W_v", &params.W_v, false},       {"b_v", &params.b_v, false},
      {"W_att", &params.W_att, false},   {"W_fc", &params.W_fc, false},
      {"b_fc", &params.b_fc, false},     {"W_cls", &params.W_cls, false},
      {"b_cls", &params.b_cls, false},
  };
  if (params.adapter_enabled) {
    refs.push_back({"adapter_gamma", &params.adapter_gamma, true});
    refs.push_back({"adapter_beta", &params.adapter_beta, true});
  }
  return refs;
}

namespace {

template <typename S>
Tensor<S> gaussian_matrix(RngStream& rng, int rows, int cols, int fan_in) {
  Tensor<S> out = Tensor<S>::zeros({rows, cols});
  const double std = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (S& v : out.data) v = static_cast<S>(std * rng.normal());
  return out;
}

}  // namespace

template <typename S>
MhfaParams<S> init_params(const MhfaConfig& cfg, RngStream& rng) {
  cfg.validate();
  MhfaParams<S> p;
  p.adapter_enabled = cfg.adapter_enabled;
  p.w_k = Tensor<S>::zeros({cfg.L});
  p.w_v = Tensor<S>::zeros({cfg.L});
  p.W_k = gaussian_matrix<S>(rng, cfg.D, cfg.D_cmp, cfg.D);
  p.b_k = Tensor<S>::zeros({cfg.D_cmp});
  p.W_v = gaussian_matrix<S>(rng, cfg.D, cfg.D_cmp, cfg.D);
  p.b_v = Tensor<S>::zeros({cfg.D_cmp});
  p.W_att = gaussian_matrix<S>(rng, cfg.D_cmp, cfg.H, cfg.D_cmp);
  p.W_fc = gaussian_matrix<S>(rng, cfg.H * cfg.D_cmp, cfg.E, cfg.H * cfg.D_cmp);
  p.b_fc = Tensor<S>::zeros({cfg.E});
  p.W_cls = gaussian_matrix<S>(rng, cfg.E, 2, cfg.E);
  p.b_cls = Tensor<S>::zeros({2});
  if (cfg.adapter_enabled) {
    p.adapter_gamma = Tensor<S>::full({cfg.L, cfg.D}, S{1});
    p.adapter_beta = Tensor<S>::zeros({cfg.L, cfg.D});
  }
  return p;
}

template <typename S>
MhfaParams<S> zero_params(const MhfaConfig& cfg) {
  cfg.validate();
  MhfaParams<S> p;
  p.adapter_enabled = cfg.adapter_enabled;
  p.w_k = Tensor<S>::zeros({cfg.L});
  p.w_v = Tensor<S>::zeros({cfg.L});
  p.W_k = Tensor<S>::zeros({cfg.D, cfg.D_cmp});
  p.b_k = Tensor<S>::zeros({cfg.D_cmp});
  p.W_v = Tensor<S>::zeros({cfg.D, cfg.D_cmp});
  p.b_v = Tensor<S>::zeros({cfg.D_cmp});
  p.W_att = Tensor<S>::zeros({cfg.D_cmp, cfg.H});
  p.W_fc = Tensor<S>::zeros({cfg.H * cfg.D_cmp, cfg.E});
  p.b_fc = Tensor<S>::zeros({cfg.E});
  p.W_cls = Tensor<S>::zeros({cfg.E, 2});
  p.b_cls = Tensor<S>::zeros({2});
  if (cfg.adapter_enabled) {
    p.adapter_gamma = Tensor<S>::zeros({cfg.L, cfg.D});
    p.adapter_beta = Tensor<S>::zeros({cfg.L, cfg.D});
  }
  return p;
}

template <typename S>
Tensor<S> aggregate_layers(const FeatureStack& x, const Tensor<S>& w) {
  if (w.rank() != 1 || w.shape[0] != x.L) {
    throw DimensionError("aggregate_layers: weight shape " + shape_str(w.shape) +
                         " does not match layer count " + std::to_string(x.L));
  }
  // Stable softmax over the L weights.
  std::vector<S> sm(w.data.begin(), w.data.end());
  S mx = sm[0];
  for (S v : sm) mx = std::max(mx, v);
  S sum = S{0};
  for (S& v : sm) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (S& v : sm) v /= sum;

  Tensor<S> out = Tensor<S>::zeros({x.T, x.D});
  for (int l = 0; l < x.L; ++l) {
    const S wl = sm[static_cast<std::size_t>(l)];
    for (int t = 0; t < x.T; ++t) {
      for (int d = 0; d < x.D; ++d) {
        out.at(t, d) += wl * static_cast<S>(x.at(l, t, d));
      }
    }
  }
  return out;
}

namespace {

// Layer l of a FeatureStack as a [T x D] tensor in the graph scalar type.
template <typename S>
Tensor<S> layer_tensor(const FeatureStack& x, int l) {
  Tensor<S> out = Tensor<S>::zeros({x.T, x.D});
  for (int t = 0; t < x.T; ++t) {
    for (int d = 0; d < x.D; ++d) out.at(t, d) = static_cast<S>(x.at(l, t, d));
  }
  return out;
}

// Softmax-weighted layer sum, recorded on the graph.
template <typename S>
typename Graph<S>::NodeId aggregate_on_graph(Graph<S>& g,
                                             const std::vector<typename Graph<S>::NodeId>& layers,
                                             typename Graph<S>::NodeId w) {
  const auto sm = g.softmax(w, 0);
  auto acc = g.scale_by_element(layers[0], sm, 0);
  for (std::size_t l = 1; l < layers.size(); ++l) {
    acc = g.add(acc, g.scale_by_element(layers[l], sm, static_cast<int>(l)));
  }
  return acc;
}

}  // namespace

template <typename S>
MhfaGraphOuts<S> build_mhfa_forward_with_params(
    Graph<S>& g, const std::vector<const FeatureStack*>& batch,
    const std::vector<typename Graph<S>::NodeId>& param_nodes, const MhfaConfig& cfg, Mode mode,
    RngStream& rng) {
  cfg.validate();
  if (batch.empty()) throw ContractError("mhfa_forward: empty batch");
  const std::size_t expected = cfg.adapter_enabled ? 13 : 11;
  if (param_nodes.size() != expected) {
    throw ContractError("mhfa_forward: expected " + std::to_string(expected) +
                        " parameter nodes, got " + std::to_string(param_nodes.size()));
  }
  for (const FeatureStack* x : batch) {
    if (x->L != cfg.L || x->D != cfg.D) {
      throw DimensionError("mhfa_forward(input): stack [" + std::to_string(x->L) + "x" +
                           std::to_string(x->T) + "x" + std::to_string(x->D) +
                           "] does not match config L=" + std::to_string(cfg.L) +
                           " D=" + std::to_string(cfg.D));
    }
  }

  MhfaGraphOuts<S> outs;
  outs.param_nodes = param_nodes;
  // Registry order (see param_registry).
  const auto w_k = param_nodes[0], w_v = param_nodes[1];
  const auto W_k = param_nodes[2], b_k = param_nodes[3];
  const auto W_v = param_nodes[4], b_v = param_nodes[5];
  const auto W_att = param_nodes[6];
  const auto W_fc = param_nodes[7], b_fc = param_nodes[8];
  const auto W_cls = param_nodes[9], b_cls = param_nodes[10];

  // Stage (i)-(ii): adapter + layer aggregation per utterance.
  std::vector<typename Graph<S>::NodeId> k_feats, v_feats;
  for (const FeatureStack* x : batch) {
    std::vector<typename Graph<S>::NodeId> layers;
    layers.reserve(static_cast<std::size_t>(cfg.L));
    for (int l = 0; l < cfg.L; ++l) {
      auto node = g.constant(layer_tensor<S>(*x, l));
      if (cfg.adapter_enabled) {
        node = g.add_bcast(g.mul_bcast(node, g.row(param_nodes[11], l)),
                           g.row(param_nodes[12], l));
      }
      layers.push_back(node);
    }
    k_feats.push_back(aggregate_on_graph(g, layers, w_k));
    v_feats.push_back(aggregate_on_graph(g, layers, w_v));
  }

  // Stage (iii): DSU on the aggregated Value stream, whole batch at once.
  if (cfg.dsu_enabled) {
    v_feats = dsu_perturb_graph(g, v_feats, cfg.dsu, rng, mode);
  }

  // Stages (iv)-(viii) per utterance.
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto k = g.add_bcast(g.matmul(k_feats[i], W_k), b_k);
    const auto v = g.add_bcast(g.matmul(v_feats[i], W_v), b_v);
    const auto att = g.softmax(g.matmul(k, W_att), 0);  // [T x H], softmax over time
    const auto pooled = g.matmul(g.transpose(att), v);  // [H x D_cmp]
    const auto flat = g.reshape(pooled, {1, cfg.H * cfg.D_cmp});
    const auto emb = g.add_bcast(g.matmul(flat, W_fc), b_fc);     // [1 x E]
    const auto logits = g.add_bcast(g.matmul(emb, W_cls), b_cls);  // [1 x 2]
    outs.attentions.push_back(att);
    outs.embeddings.push_back(emb);
    outs.logits.push_back(logits);
  }
  return outs;
}

template <typename S>
MhfaGraphOuts<S> build_mhfa_forward(Graph<S>& g, const std::vector<const FeatureStack*>& batch,
                                    const MhfaParams<S>& params, const MhfaConfig& cfg, Mode mode,
                                    RngStream& rng, bool track_grads) {
  // Non-const view only to reuse the registry; tensors are not mutated.
  MhfaParams<S>& mutable_params = const_cast<MhfaParams<S>&>(params);
  const auto refs = param_registry(mutable_params);
  std::vector<typename Graph<S>::NodeId> param_nodes;
  param_nodes.reserve(refs.size());
  for (const ParamRef<S>& ref : refs) {
    param_nodes.push_back(g.input(*ref.tensor, track_grads));
  }
  return build_mhfa_forward_with_params(g, batch, param_nodes, cfg, mode, rng);
}

template <typename S>
MhfaBatchGraph<S> build_mhfa_loss(Graph<S>& g, const std::vector<const FeatureStack*>& batch,
                                  const std::vector<int>& labels, const MhfaParams<S>& params,
                                  const MhfaConfig& cfg, Mode mode, RngStream& rng,
                                  bool track_grads) {
  if (labels.size() != batch.size()) {
    throw DimensionError("mhfa loss: " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(batch.size()));
  }
  MhfaBatchGraph<S> out;
  out.outs = build_mhfa_forward(g, batch, params, cfg, mode, rng, track_grads);
  const auto stacked =
      g.reshape(g.concat_last(out.outs.logits), {static_cast<int>(batch.size()), 2});
  out.log_probs = g.log_softmax(stacked, 1);
  out.loss = g.nll_loss(out.log_probs, labels);
  return out;
}

template <typename S>
MhfaForwardResult<S> mhfa_forward(const FeatureStack& x, const MhfaParams<S>& params,
                                  const MhfaConfig& cfg, Mode mode, RngStream& rng) {
  Graph<S> g;
  const std::vector<const FeatureStack*> batch = {&x};
  const auto outs = build_mhfa_forward(g, batch, params, cfg, mode, rng, false);
  MhfaForwardResult<S> result;
  result.logits = Tensor<S>({2}, g.value(outs.logits[0]).data);
  result.embedding = Tensor<S>({cfg.E}, g.value(outs.embeddings[0]).data);
  result.attention = g.value(outs.attentions[0]);
  return result;
}

#define SPOOFDET_INSTANTIATE_MHFA(S)                                                     \
  template std::vector<ParamRef<S>> param_registry(MhfaParams<S>&);                      \
  template MhfaParams<S> init_params(const MhfaConfig&, RngStream&);                     \
  template MhfaParams<S> zero_params(const MhfaConfig&);                                 \
  template Tensor<S> aggregate_layers(const FeatureStack&, const Tensor<S>&);            \
  template MhfaGraphOuts<S> build_mhfa_forward_with_params(                              \
      Graph<S>&, const std::vector<const FeatureStack*>&,                                \
      const std::vector<typename Graph<S>::NodeId>&, const MhfaConfig&, Mode,            \
      RngStream&);                                                                       \
  template MhfaGraphOuts<S> build_mhfa_forward(Graph<S>&,                                \
                                               const std::vector<const FeatureStack*>&, \
                                               const MhfaParams<S>&, const MhfaConfig&,  \
                                               Mode, RngStream&, bool);                  \
  template MhfaBatchGraph<S> build_mhfa_loss(Graph<S>&,                                  \
                                             const std::vector<const FeatureStack*>&,    \
                                             const std::vector<int>&, const MhfaParams<S>&, \
                                             const MhfaConfig&, Mode, RngStream&, bool); \
  template MhfaForwardResult<S> mhfa_forward(const FeatureStack&, const MhfaParams<S>&,  \
                                             const MhfaConfig&, Mode, RngStream&);

SPOOFDET_INSTANTIATE_MHFA(float)
SPOOFDET_INSTANTIATE_MHFA(double)

#undef SPOOFDET_INSTANTIATE_MHFA

}  // namespace spoofdet
