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

#include "spoofdet/dsu.hpp"

#include <cmath>
#include <string>

#include "spoofdet/error.hpp"

namespace spoofdet {

void DsuConfig::validate() const {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ConfigError("DsuConfig: p must lie in [0, 1], got " + std::to_string(p));
  }
  if (!(eps > 0.0)) throw ConfigError("DsuConfig: eps must be positive");
}

namespace {

// Population std over the batch axis of a [B x C] tensor. Deliberately has
// no eps floor: it measures uncertainty, and must vanish exactly for B == 1
// or identical instances so the perturbation degenerates to identity.
template <typename S>
Tensor<S> batch_std(const Tensor<S>& v) {
  const int b = v.rows(), c = v.cols();
  Tensor<S> out = Tensor<S>::zeros({c});
  const S inv_b = S{1} / static_cast<S>(b);
  for (int j = 0; j < c; ++j) {
    S mean = S{0};
    for (int i = 0; i < b; ++i) mean += v.at(i, j);
    mean *= inv_b;
    S var = S{0};
    for (int i = 0; i < b; ++i) {
      const S diff = v.at(i, j) - mean;
      var += diff * diff;
    }
    out.data[static_cast<std::size_t>(j)] = std::sqrt(var * inv_b);
  }
  return out;
}

// Gate + noise draws shared by the plain and the graph variants so both
// consume the rng identically.
template <typename S>
bool draw_gate(const DsuConfig& cfg, RngStream& rng) {
  return rng.uniform() < cfg.p;
}

template <typename S>
Tensor<S> draw_noise(RngStream& rng, int b, int c) {
  Tensor<S> out = Tensor<S>::zeros({b, c});
  for (S& v : out.data) v = static_cast<S>(rng.normal());
  return out;
}

}  // namespace

template <typename S>
std::pair<Tensor<S>, Tensor<S>> instance_stats(const Tensor<S>& x, double eps) {
  if (x.rank() != 3) {
    throw DimensionError("instance_stats: expected [B x T x C], got " + shape_str(x.shape));
  }
  const int b = x.shape[0], t = x.shape[1], c = x.shape[2];
  Tensor<S> mu = Tensor<S>::zeros({b, c});
  Tensor<S> sigma = Tensor<S>::zeros({b, c});
  const S inv_t = S{1} / static_cast<S>(t);
  const S eps_s = static_cast<S>(eps);
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < c; ++j) {
      S mean = S{0};
      for (int k = 0; k < t; ++k) {
        mean += x.data[(static_cast<std::size_t>(i) * static_cast<std::size_t>(t) +
                        static_cast<std::size_t>(k)) *
                           static_cast<std::size_t>(c) +
                       static_cast<std::size_t>(j)];
      }
      mean *= inv_t;
      S var = S{0};
      for (int k = 0; k < t; ++k) {
        const S diff = x.data[(static_cast<std::size_t>(i) * static_cast<std::size_t>(t) +
                               static_cast<std::size_t>(k)) *
                                  static_cast<std::size_t>(c) +
                              static_cast<std::size_t>(j)] -
                       mean;
        var += diff * diff;
      }
      mu.at(i, j) = mean;
      sigma.at(i, j) = std::sqrt(var * inv_t + eps_s);
    }
  }
  return {std::move(mu), std::move(sigma)};
}

template <typename S>
Tensor<S> dsu_perturb(const Tensor<S>& x, const DsuConfig& cfg, RngStream& rng, Mode mode,
                      DsuTrace<S>* trace, const Tensor<S>* forced_eps_mu,
                      const Tensor<S>* forced_eps_sigma) {
  cfg.validate();
  if (x.rank() != 3) {
    throw DimensionError("dsu_perturb: expected [B x T x C], got " + shape_str(x.shape));
  }
  if (trace) trace->applied = false;
  if (mode == Mode::eval) return x;
  if (!draw_gate<S>(cfg, rng)) return x;

  const int b = x.shape[0], t = x.shape[1], c = x.shape[2];
  auto [mu, sigma] = instance_stats(x, cfg.eps);
  Tensor<S> sigma_mu = batch_std(mu);
  Tensor<S> sigma_sigma = batch_std(sigma);

  auto check_forced = [&](const Tensor<S>* f, const char* name) {
    if (f && f->shape != std::vector<int>{b, c}) {
      throw DimensionError(std::string("dsu_perturb: ") + name + " must be " +
                           shape_str({b, c}) + ", got " + shape_str(f->shape));
    }
  };
  check_forced(forced_eps_mu, "forced_eps_mu");
  check_forced(forced_eps_sigma, "forced_eps_sigma");
  Tensor<S> eps_mu = forced_eps_mu ? *forced_eps_mu : draw_noise<S>(rng, b, c);
  Tensor<S> eps_sigma = forced_eps_sigma ? *forced_eps_sigma : draw_noise<S>(rng, b, c);

  Tensor<S> mu_tilde = Tensor<S>::zeros({b, c});
  Tensor<S> sigma_tilde = Tensor<S>::zeros({b, c});
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < c; ++j) {
      mu_tilde.at(i, j) = mu.at(i, j) + eps_mu.at(i, j) * sigma_mu.data[static_cast<std::size_t>(j)];
      sigma_tilde.at(i, j) =
          sigma.at(i, j) + eps_sigma.at(i, j) * sigma_sigma.data[static_cast<std::size_t>(j)];
    }
  }

  Tensor<S> out = x;
  for (int i = 0; i < b; ++i) {
    for (int k = 0; k < t; ++k) {
      for (int j = 0; j < c; ++j) {
        S& v = out.data[(static_cast<std::size_t>(i) * static_cast<std::size_t>(t) +
                         static_cast<std::size_t>(k)) *
                            static_cast<std::size_t>(c) +
                        static_cast<std::size_t>(j)];
        v = ((v - mu.at(i, j)) / sigma.at(i, j)) * sigma_tilde.at(i, j) + mu_tilde.at(i, j);
      }
    }
  }

  if (trace) {
    trace->applied = true;
    trace->stats = DsuStats<S>{mu, sigma, sigma_mu, sigma_sigma};
    trace->eps_mu = std::move(eps_mu);
    trace->eps_sigma = std::move(eps_sigma);
    trace->mu_tilde = std::move(mu_tilde);
    trace->sigma_tilde = std::move(sigma_tilde);
  }
  return out;
}

template <typename S>
std::vector<typename Graph<S>::NodeId> dsu_perturb_graph(
    Graph<S>& g, const std::vector<typename Graph<S>::NodeId>& instances, const DsuConfig& cfg,
    RngStream& rng, Mode mode) {
  cfg.validate();
  if (instances.empty()) throw ContractError("dsu_perturb_graph: empty batch");
  const int c = g.value(instances[0]).cols();
  for (auto id : instances) {
    if (g.value(id).rank() != 2 || g.value(id).cols() != c) {
      throw DimensionError("dsu_perturb_graph: instances must be [T x C] with shared C, got " +
                           shape_str(g.value(id).shape));
    }
  }
  if (mode == Mode::eval) return instances;
  if (!draw_gate<S>(cfg, rng)) return instances;

  const int b = static_cast<int>(instances.size());
  const S eps_s = static_cast<S>(cfg.eps);

  std::vector<typename Graph<S>::NodeId> mu_nodes, sigma_nodes;
  Tensor<S> mu_vals = Tensor<S>::zeros({b, c});
  Tensor<S> sigma_vals = Tensor<S>::zeros({b, c});
  for (int i = 0; i < b; ++i) {
    const auto mu = g.reduce_mean(instances[static_cast<std::size_t>(i)], 0);
    const auto sigma = g.reduce_std(instances[static_cast<std::size_t>(i)], 0, eps_s);
    mu_nodes.push_back(mu);
    sigma_nodes.push_back(sigma);
    for (int j = 0; j < c; ++j) {
      mu_vals.at(i, j) = g.value(mu).data[static_cast<std::size_t>(j)];
      sigma_vals.at(i, j) = g.value(sigma).data[static_cast<std::size_t>(j)];
    }
  }
  // Batch uncertainties and the sampled jitter enter as constants.
  const Tensor<S> sigma_mu = batch_std(mu_vals);
  const Tensor<S> sigma_sigma = batch_std(sigma_vals);
  const Tensor<S> eps_mu = draw_noise<S>(rng, b, c);
  const Tensor<S> eps_sigma = draw_noise<S>(rng, b, c);

  std::vector<typename Graph<S>::NodeId> out;
  out.reserve(instances.size());
  for (int i = 0; i < b; ++i) {
    Tensor<S> offs_mu = Tensor<S>::zeros({c});
    Tensor<S> offs_sigma = Tensor<S>::zeros({c});
    for (int j = 0; j < c; ++j) {
      offs_mu.data[static_cast<std::size_t>(j)] =
          eps_mu.at(i, j) * sigma_mu.data[static_cast<std::size_t>(j)];
      offs_sigma.data[static_cast<std::size_t>(j)] =
          eps_sigma.at(i, j) * sigma_sigma.data[static_cast<std::size_t>(j)];
    }
    const auto x = instances[static_cast<std::size_t>(i)];
    const auto normalized =
        g.div_bcast(g.sub_bcast(x, mu_nodes[static_cast<std::size_t>(i)]),
                    sigma_nodes[static_cast<std::size_t>(i)]);
    const auto mu_t = g.add(mu_nodes[static_cast<std::size_t>(i)], g.constant(std::move(offs_mu)));
    const auto sigma_t =
        g.add(sigma_nodes[static_cast<std::size_t>(i)], g.constant(std::move(offs_sigma)));
    out.push_back(g.add_bcast(g.mul_bcast(normalized, sigma_t), mu_t));
  }
  return out;
}

template std::pair<Tensor<float>, Tensor<float>> instance_stats(const Tensor<float>&, double);
template std::pair<Tensor<double>, Tensor<double>> instance_stats(const Tensor<double>&, double);
template Tensor<float> dsu_perturb(const Tensor<float>&, const DsuConfig&, RngStream&, Mode,
                                   DsuTrace<float>*, const Tensor<float>*, const Tensor<float>*);
template Tensor<double> dsu_perturb(const Tensor<double>&, const DsuConfig&, RngStream&, Mode,
                                    DsuTrace<double>*, const Tensor<double>*,
                                    const Tensor<double>*);
template std::vector<Graph<float>::NodeId> dsu_perturb_graph(Graph<float>&,
                                                             const std::vector<Graph<float>::NodeId>&,
                                                             const DsuConfig&, RngStream&, Mode);
template std::vector<Graph<double>::NodeId> dsu_perturb_graph(
    Graph<double>&, const std::vector<Graph<double>::NodeId>&, const DsuConfig&, RngStream&, Mode);

}  // namespace spoofdet
