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

#include <functional>
#include <string>
#include <vector>

#include "spoofdet/tensor.hpp"

namespace spoofdet {

// Builds a scalar loss node from parameter leaves already inserted into the
// graph (one NodeId per parameter tensor, in the order given to grad_check).
using LossBuilder =
    std::function<Graph<double>::NodeId(Graph<double>&, const std::vector<Graph<double>::NodeId>&)>;

struct GradCheckOptions {
  double eps = 1e-5;
  // Fault-injection hook: when fault_param >= 0, the analytic gradient of
  // that parameter tensor is scaled by fault_scale before comparison, so the
  // checker itself can be verified to catch wrong gradients.
  int fault_param = -1;
  double fault_scale = 2.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  int worst_param = -1;        // index into params of the worst element
  std::size_t worst_elem = 0;  // flat element index within that parameter
};

// Central-difference gradient verification at 64-bit precision. For every
// element of every parameter, compares the analytic gradient from backward()
// against (f(p+eps) - f(p-eps)) / (2 eps) and returns the maximum of
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
// A non-finite loss at any evaluation point raises NumericError naming the
// parameter index being perturbed (-1 for the unperturbed base point).
GradCheckResult grad_check(const LossBuilder& build, const std::vector<Tensor64>& params,
                           const GradCheckOptions& options = {});

}  // namespace spoofdet
