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

#include "spoofdet/grad_check.hpp"

#include <cmath>
#include <cstddef>

#include "spoofdet/error.hpp"

namespace spoofdet {

namespace {

// One forward evaluation of the builder on a fresh graph; leaves are inserted
// without gradient tracking since only the loss value is needed.
double eval_loss(const LossBuilder& build, const std::vector<Tensor64>& params, int perturbed) {
  Graph<double> g;
  std::vector<Graph<double>::NodeId> leaves;
  leaves.reserve(params.size());
  for (const Tensor64& p : params) leaves.push_back(g.input(p, false));
  const auto loss = build(g, leaves);
  if (g.value(loss).numel() != 1) {
    throw ContractError("grad_check: builder produced a non-scalar loss of shape " +
                        shape_str(g.value(loss).shape));
  }
  const double v = g.value(loss).data[0];
  if (!std::isfinite(v)) {
    throw NumericError("grad_check: non-finite loss while perturbing parameter " +
                       std::to_string(perturbed));
  }
  return v;
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& build, const std::vector<Tensor64>& params,
                           const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw ContractError("grad_check: eps must be positive");

  // Analytic pass: one graph with gradient tracking on every parameter.
  Graph<double> g;
  std::vector<Graph<double>::NodeId> leaves;
  leaves.reserve(params.size());
  for (const Tensor64& p : params) leaves.push_back(g.input(p, true));
  const auto loss = build(g, leaves);
  if (g.value(loss).numel() != 1) {
    throw ContractError("grad_check: builder produced a non-scalar loss of shape " +
                        shape_str(g.value(loss).shape));
  }
  if (!std::isfinite(g.value(loss).data[0])) {
    throw NumericError("grad_check: non-finite loss while perturbing parameter -1");
  }
  g.backward(loss);

  std::vector<Tensor64> analytic;
  analytic.reserve(params.size());
  for (std::size_t pi = 0; pi < params.size(); ++pi) analytic.push_back(g.grad(leaves[pi]));
  if (options.fault_param >= 0 && options.fault_param < static_cast<int>(params.size())) {
    for (double& v : analytic[static_cast<std::size_t>(options.fault_param)].data) {
      v *= options.fault_scale;
    }
  }

  GradCheckResult result;
  std::vector<Tensor64> work = params;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    for (std::size_t ei = 0; ei < work[pi].data.size(); ++ei) {
      const double original = work[pi].data[ei];
      work[pi].data[ei] = original + options.eps;
      const double plus = eval_loss(build, work, static_cast<int>(pi));
      work[pi].data[ei] = original - options.eps;
      const double minus = eval_loss(build, work, static_cast<int>(pi));
      work[pi].data[ei] = original;

      const double numeric = (plus - minus) / (2.0 * options.eps);
      const double a = analytic[pi].data[ei];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-12});
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = static_cast<int>(pi);
        result.worst_elem = ei;
      }
    }
  }
  return result;
}

}  // namespace spoofdet
