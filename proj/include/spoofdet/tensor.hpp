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
#include <deque>
#include <functional>
#include <string>
#include <vector>

namespace spoofdet {

/// Dense row-major tensor (last index fastest). Values are immutable by
/// convention once a tensor has been handed to a Graph; the struct itself
/// stays a plain value type so tests and builders can fill it freely.
template <typename S>
struct Tensor {
  std::vector<int> shape;
  std::vector<S> data;

  Tensor() = default;
  Tensor(std::vector<int> shape_in, std::vector<S> data_in);

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, S value);
  static Tensor scalar(S value);

  std::size_t numel() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }

  // 2-D helpers.
  int rows() const;
  int cols() const;
  S& at(int i, int j);
  const S& at(int i, int j) const;

  bool all_finite() const;

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data.reserve(data.size());
    for (S v : data) out.data.push_back(static_cast<T>(v));
    return out;
  }
};

std::string shape_str(const std::vector<int>& shape);

// Assertion hook for the all-finite invariant; throws NumericError with the
// given context if any stored value is NaN or Inf.
template <typename S>
void assert_finite(const Tensor<S>& t, const std::string& context);

/// Reverse-mode tape. Operations evaluate eagerly at record time; each node
/// stores its inputs by index (always earlier nodes) and a backward closure.
/// backward() walks the tape once in reverse construction order and leaves
/// one gradient per requires-grad node, readable through grad().
template <typename S>
class Graph {
 public:
  using NodeId = std::int32_t;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  // Leaves.
  NodeId input(Tensor<S> value, bool requires_grad);
  NodeId constant(Tensor<S> value) { return input(std::move(value), false); }

  // Linear algebra.
  NodeId matmul(NodeId a, NodeId b);
  NodeId transpose(NodeId a);
  NodeId reshape(NodeId a, std::vector<int> new_shape);

  // Elementwise, same shape.
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);

  // Elementwise with b broadcast over the leading axes of a
  // (b.shape must be a suffix of a.shape).
  NodeId add_bcast(NodeId a, NodeId b);
  NodeId sub_bcast(NodeId a, NodeId b);
  NodeId mul_bcast(NodeId a, NodeId b);
  NodeId div_bcast(NodeId a, NodeId b);

  // Scalar scale by a compile-time constant.
  NodeId scale(NodeId a, S factor);

  // Row i of a 2-D tensor as a 1-D tensor.
  NodeId row(NodeId a, int index);

  // x scaled by element `index` of node s (s flattened).
  NodeId scale_by_element(NodeId x, NodeId s, int index);

  // Softmax family along one axis, max-subtracted for stability.
  NodeId softmax(NodeId a, int axis);
  NodeId log_softmax(NodeId a, int axis);

  // Reductions along one axis; the axis is removed from the shape.
  NodeId reduce_sum(NodeId a, int axis);
  NodeId reduce_mean(NodeId a, int axis);
  // Population std with eps added under the square root, so the result is
  // strictly positive even on constant slices.
  NodeId reduce_std(NodeId a, int axis, S eps);

  // Full reductions to a scalar (shape {1}).
  NodeId sum_all(NodeId a);
  NodeId mean_all(NodeId a);

  // Concatenation along the last axis.
  NodeId concat_last(const std::vector<NodeId>& parts);

  // Mean negative log-likelihood: log_probs is [N x K], labels has N
  // entries in [0, K).
  NodeId nll_loss(NodeId log_probs, const std::vector<int>& labels);

  // Reverse pass from a scalar loss node. Gradients of all requires-grad
  // nodes are zeroed first, so calling backward twice on the same graph
  // produces bitwise-identical results.
  void backward(NodeId loss);

  // References returned by value()/grad() stay valid while the graph is
  // alive, including across later node creation (node storage never
  // relocates existing elements).
  const Tensor<S>& value(NodeId id) const;
  const Tensor<S>& grad(NodeId id) const;
  bool requires_grad(NodeId id) const;
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;  // allocated only when requires_grad
    std::vector<NodeId> parents;
    std::function<void(Graph&, NodeId)> backprop;
    bool requires_grad = false;
  };

  NodeId emit(Tensor<S> value, std::vector<NodeId> parents,
              std::function<void(Graph&, NodeId)> backprop);
  const Node& node(NodeId id) const;
  Node& node(NodeId id);
  bool any_requires_grad(const std::vector<NodeId>& ids) const;
  void check_id(NodeId id) const;

  std::deque<Node> nodes_;  // deque: stable references across push_back
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;
using Graph32 = Graph<float>;
using Graph64 = Graph<double>;

}  // namespace spoofdet
