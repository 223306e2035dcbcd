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

#include "spoofdet/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

#include "spoofdet/error.hpp"

namespace spoofdet {

namespace {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int e : shape) n *= static_cast<std::size_t>(e);
  return n;
}

void check_shape(const std::vector<int>& shape, const char* op) {
  for (int e : shape) {
    if (e <= 0) {
      throw DimensionError(std::string(op) + ": non-positive extent in shape " + shape_str(shape));
    }
  }
}

// Splits a shape into (outer, n, inner) around `axis`, so the flat index of
// element t along the axis in slice (o, i) is (o*n + t)*inner + i.
struct AxisDecomp {
  std::size_t outer;
  std::size_t n;
  std::size_t inner;
};

AxisDecomp decompose(const std::vector<int>& shape, int axis, const char* op) {
  if (axis < 0 || axis >= static_cast<int>(shape.size())) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(shape));
  }
  AxisDecomp d{1, static_cast<std::size_t>(shape[axis]), 1};
  for (int i = 0; i < axis; ++i) d.outer *= static_cast<std::size_t>(shape[i]);
  for (int i = axis + 1; i < static_cast<int>(shape.size()); ++i) {
    d.inner *= static_cast<std::size_t>(shape[i]);
  }
  return d;
}

// Shape of `a` with `axis` removed; scalars collapse to shape {1}.
std::vector<int> reduced_shape(const std::vector<int>& shape, int axis) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(shape.size()); ++i) {
    if (i != axis) out.push_back(shape[i]);
  }
  if (out.empty()) out.push_back(1);
  return out;
}

// b broadcasts over the leading axes of a iff b.shape is a suffix of a.shape.
void check_suffix(const std::vector<int>& a, const std::vector<int>& b, const char* op) {
  if (b.size() > a.size() ||
      !std::equal(b.begin(), b.end(), a.end() - static_cast<long>(b.size()))) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(b) +
                         " is not a trailing suffix of " + shape_str(a));
  }
}

template <typename S>
using ConstMat =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using MutMat = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

template <typename S>
Tensor<S>::Tensor(std::vector<int> shape_in, std::vector<S> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
  check_shape(shape, "Tensor");
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("Tensor: shape " + shape_str(shape) + " expects " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
}

template <typename S>
Tensor<S> Tensor<S>::zeros(std::vector<int> shape) {
  return full(std::move(shape), S{0});
}

template <typename S>
Tensor<S> Tensor<S>::full(std::vector<int> shape, S value) {
  check_shape(shape, "Tensor::full");
  Tensor<S> t;
  t.shape = std::move(shape);
  t.data.assign(shape_numel(t.shape), value);
  return t;
}

template <typename S>
Tensor<S> Tensor<S>::scalar(S value) {
  Tensor<S> t;
  t.shape = {1};
  t.data = {value};
  return t;
}

template <typename S>
int Tensor<S>::rows() const {
  if (rank() != 2) throw DimensionError("Tensor::rows: tensor is " + shape_str(shape));
  return shape[0];
}

template <typename S>
int Tensor<S>::cols() const {
  if (rank() != 2) throw DimensionError("Tensor::cols: tensor is " + shape_str(shape));
  return shape[1];
}

template <typename S>
S& Tensor<S>::at(int i, int j) {
  return data[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols()) +
              static_cast<std::size_t>(j)];
}

template <typename S>
const S& Tensor<S>::at(int i, int j) const {
  return data[static_cast<std::size_t>(i) * static_cast<std::size_t>(cols()) +
              static_cast<std::size_t>(j)];
}

template <typename S>
bool Tensor<S>::all_finite() const {
  for (S v : data) {
    if (!std::isfinite(static_cast<double>(v))) return false;
  }
  return true;
}

template <typename S>
void assert_finite(const Tensor<S>& t, const std::string& context) {
  if (!t.all_finite()) {
    throw NumericError(context + ": tensor of shape " + shape_str(t.shape) +
                       " contains non-finite values");
  }
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

template <typename S>
void Graph<S>::check_id(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) {
    throw ContractError("Graph: invalid node id " + std::to_string(id));
  }
}

template <typename S>
const typename Graph<S>::Node& Graph<S>::node(NodeId id) const {
  check_id(id);
  return nodes_[static_cast<std::size_t>(id)];
}

template <typename S>
typename Graph<S>::Node& Graph<S>::node(NodeId id) {
  check_id(id);
  return nodes_[static_cast<std::size_t>(id)];
}

template <typename S>
bool Graph<S>::any_requires_grad(const std::vector<NodeId>& ids) const {
  for (NodeId id : ids) {
    if (node(id).requires_grad) return true;
  }
  return false;
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::input(Tensor<S> value, bool requires_grad) {
  check_shape(value.shape, "Graph::input");
  if (shape_numel(value.shape) != value.numel()) {
    throw DimensionError("Graph::input: shape/data mismatch for " + shape_str(value.shape));
  }
  Node n;
  n.requires_grad = requires_grad;
  if (requires_grad) n.grad = Tensor<S>::zeros(value.shape);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::emit(Tensor<S> value, std::vector<NodeId> parents,
                                         std::function<void(Graph&, NodeId)> backprop) {
  Node n;
  n.requires_grad = any_requires_grad(parents);
  if (n.requires_grad) {
    n.grad = Tensor<S>::zeros(value.shape);
    n.backprop = std::move(backprop);
  }
  n.value = std::move(value);
  n.parents = std::move(parents);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

template <typename S>
const Tensor<S>& Graph<S>::value(NodeId id) const {
  return node(id).value;
}

template <typename S>
const Tensor<S>& Graph<S>::grad(NodeId id) const {
  const Node& n = node(id);
  if (!n.requires_grad) {
    throw ContractError("Graph::grad: node " + std::to_string(id) + " does not require grad");
  }
  return n.grad;
}

template <typename S>
bool Graph<S>::requires_grad(NodeId id) const {
  return node(id).requires_grad;
}

template <typename S>
void Graph<S>::backward(NodeId loss) {
  check_id(loss);
  if (node(loss).value.numel() != 1) {
    throw ContractError("Graph::backward: loss must be scalar, got shape " +
                        shape_str(node(loss).value.shape));
  }
  for (Node& n : nodes_) {
    if (n.requires_grad) std::fill(n.grad.data.begin(), n.grad.data.end(), S{0});
  }
  if (!node(loss).requires_grad) return;  // no trainable leaves reach the loss
  node(loss).grad.data[0] = S{1};
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = node(id);
    if (n.requires_grad && n.backprop) n.backprop(*this, id);
  }
}

// --- ops -------------------------------------------------------------------

template <typename S>
typename Graph<S>::NodeId Graph<S>::matmul(NodeId a, NodeId b) {
  const Tensor<S>& av = node(a).value;
  const Tensor<S>& bv = node(b).value;
  if (av.rank() != 2 || bv.rank() != 2) {
    throw DimensionError("matmul: operands must be 2-D, got " + shape_str(av.shape) + " and " +
                         shape_str(bv.shape));
  }
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner extents differ for " + shape_str(av.shape) + " and " +
                         shape_str(bv.shape));
  }
  const int m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor<S> out = Tensor<S>::zeros({m, n});
  MutMat<S>(out.data.data(), m, n).noalias() =
      ConstMat<S>(av.data.data(), m, k) * ConstMat<S>(bv.data.data(), k, n);
  return emit(std::move(out), {a, b}, [a, b, m, k, n](Graph& g, NodeId self) {
    const Tensor<S>& gv = g.node(self).grad;
    ConstMat<S> gm(gv.data.data(), m, n);
    if (g.node(a).requires_grad) {
      MutMat<S> da(g.node(a).grad.data.data(), m, k);
      da.noalias() += gm * ConstMat<S>(g.node(b).value.data.data(), k, n).transpose();
    }
    if (g.node(b).requires_grad) {
      MutMat<S> db(g.node(b).grad.data.data(), k, n);
      db.noalias() += ConstMat<S>(g.node(a).value.data.data(), m, k).transpose() * gm;
    }
  });
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::transpose(NodeId a) {
  const Tensor<S>& av = node(a).value;
  if (av.rank() != 2) {
    throw DimensionError("transpose: operand must be 2-D, got " + shape_str(av.shape));
  }
  const int r = av.rows(), c = av.cols();
  Tensor<S> out = Tensor<S>::zeros({c, r});
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) out.at(j, i) = av.at(i, j);
  }
  return emit(std::move(out), {a}, [a, r, c](Graph& g, NodeId self) {
    if (!g.node(a).requires_grad) return;
    const Tensor<S>& gv = g.node(self).grad;
    Tensor<S>& da = g.node(a).grad;
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) da.at(i, j) += gv.at(j, i);
    }
  });
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::reshape(NodeId a, std::vector<int> new_shape) {
  const Tensor<S>& av = node(a).value;
  check_shape(new_shape, "reshape");
  if (shape_numel(new_shape) != av.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(av.shape) + " as " +
                         shape_str(new_shape));
  }
  Tensor<S> out;
  out.shape = std::move(new_shape);
  out.data = av.data;
  return emit(std::move(out), {a}, [a](Graph& g, NodeId self) {
    if (!g.node(a).requires_grad) return;
    const Tensor<S>& gv = g.node(self).grad;
    Tensor<S>& da = g.node(a).grad;
    for (std::size_t i = 0; i < gv.data.size(); ++i) da.data[i] += gv.data[i];
  });
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::add(NodeId a, NodeId b) {
  const Tensor<S>& av = node(a).value;
  const Tensor<S>& bv = node(b).value;
  if (av.shape != bv.shape) {
    throw DimensionError("add: shape mismatch " + shape_str(av.shape) + " vs " +
                         shape_str(bv.shape));
  }
  Tensor<S> out = av;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
  return emit(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
    const Tensor<S>& gv = g.node(self).grad;
    if (g.node(a).requires_grad) {
      Tensor<S>& da = g.node(a).grad;
      for (std::size_t i = 0; i < gv.data.size(); ++i) da.data[i] += gv.data[i];
    }
    if (g.node(b).requires_grad) {
      Tensor<S>& db = g.node(b).grad;
      for (std::size_t i = 0; i < gv.data.size(); ++i) db.data[i] += gv.data[i];
    }
  });
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::sub(NodeId a, NodeId b) {
  const Tensor<S>& av = node(a).value;
  const Tensor<S>& bv = node(b).value;
  if (av.shape != bv.shape) {
    throw DimensionError("sub: shape mismatch " + shape_str(av.shape) + " vs " +
                         shape_str(bv.shape));
  }
  Tensor<S> out = av;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
  return emit(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
    const Tensor<S>& gv = g.node(self).grad;
    if (g.node(a).requires_grad) {
      Tensor<S>& da = g.node(a).grad;
      for (std::size_t i = 0; i < gv.data.size(); ++i) da.data[i] += gv.data[i];
    }
    if (g.node(b).requires_grad) {
      Tensor<S>& db = g.node(b).grad;
      for (std::size_t i = 0; i < gv.data.size(); ++i) db.data[i] -= gv.data[i];
    }
  });
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::mul(NodeId a, NodeId b) {
  const Tensor<S>& av = node(a).value;
  const Tensor<S>& bv = node(b).value;
  if (av.shape != bv.shape) {
    throw DimensionError("mul: shape mismatch " + shape_str(av.shape) + " vs " +
                         shape_str(bv.shape));
  }
  Tensor<S> out = av;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
  return emit(std::move(out), {a, b}, [a, b](Graph& g, NodeId self) {
    const Tensor<S>& gv = g.node(self).grad;
    const Tensor<S>& av2 = g.node(a).value;
    const Tensor<S>& bv2 = g.node(b).value;
    if (g.node(a).requires_grad) {
      Tensor<S>& da = g.node(a).grad;
      for (std::size_t i = 0; i < gv.data.size(); ++i) da.data[i] += gv.data[i] * bv2.data[i];
    }
    if (g.node(b).requires_grad) {
      Tensor<S>& db = g.node(b).grad;
      for (std::size_t i = 0; i < gv.data.size(); ++i) db.data[i] += gv.data[i] * av2.data[i];
    }
  });
}

namespace {

enum class BcKind { Add, Sub, Mul, Div };

}  // namespace

template <typename S>
static Tensor<S> bcast_forward(const Tensor<S>& a, const Tensor<S>& b, BcKind kind) {
  Tensor<S> out = a;
  const std::size_t inner = b.data.size();
  const std::size_t blocks = a.data.size() / inner;
  std::size_t idx = 0;
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    for (std::size_t i = 0; i < inner; ++i, ++idx) {
      switch (kind) {
        case BcKind::Add: out.data[idx] += b.data[i]; break;
        case BcKind::Sub: out.data[idx] -= b.data[i]; break;
        case BcKind::Mul: out.data[idx] *= b.data[i]; break;
        case BcKind::Div: out.data[idx] /= b.data[i]; break;
      }
    }
  }
  return out;
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::add_bcast(NodeId a, NodeId b) {
  const Tensor<S>& av = node(a).value;
  const Tensor<S>& bv = node(b).value;
  check_suffix(av.shape, bv.shape, "add_bcast");
  return emit(bcast_forward(av, bv, BcKind::Add), {a, b}, [a, b](Graph& g, NodeId self) {
    const Tensor<S>& gv = g.node(self).grad;
    const std::size_t inner = g.node(b).value.data.size();
    if (g.node(a).requires_grad) {
      Tensor<S>& da = g.node(a).grad;
      for (std::size_t i = 0; i < gv.data.size(); ++i) da.data[i] += gv.data[i];
    }
    if (g.node(b).requires_grad) {
      Tensor<S>& db = g.node(b).grad;
      for (std::size_t i = 0; i < gv.data.size(); ++i) db.data[i % inner] += gv.data[i];
    }
  });
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::sub_bcast(NodeId a, NodeId b) {
  const Tensor<S>& av = node(a).value;
  const Tensor<S>& bv = node(b).value;
  check_suffix(av.shape, bv.shape, "sub_bcast");
  return emit(bcast_forward(av, bv, BcKind::Sub), {a, b}, [a, b](Graph& g, NodeId self) {
    const Tensor<S>& gv = g.node(self).grad;
    const std::size_t inner = g.node(b).value.data.size();
    if (g.node(a).requires_grad) {
      Tensor<S>& da = g.node(a).grad;
      for (std::size_t i = 0; i < gv.data.size(); ++i) da.data[i] += gv.data[i];
    }
    if (g.node(b).requires_grad) {
      Tensor<S>& db = g.node(b).grad;
      for (std::size_t i = 0; i < gv.data.size(); ++i) db.data[i % inner] -= gv.data[i];
    }
  });
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::mul_bcast(NodeId a, NodeId b) {
  const Tensor<S>& av = node(a).value;
  const Tensor<S>& bv = node(b).value;
  check_suffix(av.shape, bv.shape, "mul_bcast");
  return emit(bcast_forward(av, bv, BcKind::Mul), {a, b}, [a, b](Graph& g, NodeId self) {
    const Tensor<S>& gv = g.node(self).grad;
    const Tensor<S>& av2 = g.node(a).value;
    const Tensor<S>& bv2 = g.node(b).value;
    const std::size_t inner = bv2.data.size();
    if (g.node(a).requires_grad) {
      Tensor<S>& da = g.node(a).grad;
      for (std::size_t i = 0; i < gv.data.size(); ++i) {
        da.data[i] += gv.data[i] * bv2.data[i % inner];
      }
    }
    if (g.node(b).requires_grad) {
      Tensor<S>& db = g.node(b).grad;
      for (std::size_t i = 0; i < gv.data.size(); ++i) {
        db.data[i % inner] += gv.data[i] * av2.data[i];
      }
    }
  });
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::div_bcast(NodeId a, NodeId b) {
  const Tensor<S>& av = node(a).value;
  const Tensor<S>& bv = node(b).value;
  check_suffix(av.shape, bv.shape, "div_bcast");
  return emit(bcast_forward(av, bv, BcKind::Div), {a, b}, [a, b](Graph& g, NodeId self) {
    const Tensor<S>& gv = g.node(self).grad;
    const Tensor<S>& av2 = g.node(a).value;
    const Tensor<S>& bv2 = g.node(b).value;
    const std::size_t inner = bv2.data.size();
    if (g.node(a).requires_grad) {
      Tensor<S>& da = g.node(a).grad;
      for (std::size_t i = 0; i < gv.data.size(); ++i) {
        da.data[i] += gv.data[i] / bv2.data[i % inner];
      }
    }
    if (g.node(b).requires_grad) {
      Tensor<S>& db = g.node(b).grad;
      for (std::size_t i = 0; i < gv.data.size(); ++i) {
        const S bi = bv2.data[i % inner];
        db.data[i % inner] -= gv.data[i] * av2.data[i] / (bi * bi);
      }
    }
  });
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::scale(NodeId a, S factor) {
  Tensor<S> out = node(a).value;
  for (S& v : out.data) v *= factor;
  return emit(std::move(out), {a}, [a, factor](Graph& g, NodeId self) {
    if (!g.node(a).requires_grad) return;
    const Tensor<S>& gv = g.node(self).grad;
    Tensor<S>& da = g.node(a).grad;
    for (std::size_t i = 0; i < gv.data.size(); ++i) da.data[i] += gv.data[i] * factor;
  });
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::row(NodeId a, int index) {
  const Tensor<S>& av = node(a).value;
  if (av.rank() != 2) {
    throw DimensionError("row: operand must be 2-D, got " + shape_str(av.shape));
  }
  if (index < 0 || index >= av.rows()) {
    throw DimensionError("row: index " + std::to_string(index) + " out of range for " +
                         shape_str(av.shape));
  }
  const int c = av.cols();
  Tensor<S> out = Tensor<S>::zeros({c});
  for (int j = 0; j < c; ++j) out.data[static_cast<std::size_t>(j)] = av.at(index, j);
  return emit(std::move(out), {a}, [a, index, c](Graph& g, NodeId self) {
    if (!g.node(a).requires_grad) return;
    const Tensor<S>& gv = g.node(self).grad;
    Tensor<S>& da = g.node(a).grad;
    for (int j = 0; j < c; ++j) da.at(index, j) += gv.data[static_cast<std::size_t>(j)];
  });
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::scale_by_element(NodeId x, NodeId s, int index) {
  const Tensor<S>& xv = node(x).value;
  const Tensor<S>& sv = node(s).value;
  if (index < 0 || static_cast<std::size_t>(index) >= sv.numel()) {
    throw DimensionError("scale_by_element: index " + std::to_string(index) +
                         " out of range for " + shape_str(sv.shape));
  }
  const S factor = sv.data[static_cast<std::size_t>(index)];
  Tensor<S> out = xv;
  for (S& v : out.data) v *= factor;
  return emit(std::move(out), {x, s}, [x, s, index](Graph& g, NodeId self) {
    const Tensor<S>& gv = g.node(self).grad;
    const S f = g.node(s).value.data[static_cast<std::size_t>(index)];
    if (g.node(x).requires_grad) {
      Tensor<S>& dx = g.node(x).grad;
      for (std::size_t i = 0; i < gv.data.size(); ++i) dx.data[i] += gv.data[i] * f;
    }
    if (g.node(s).requires_grad) {
      const Tensor<S>& xv2 = g.node(x).value;
      S acc = S{0};
      for (std::size_t i = 0; i < gv.data.size(); ++i) acc += gv.data[i] * xv2.data[i];
      g.node(s).grad.data[static_cast<std::size_t>(index)] += acc;
    }
  });
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::softmax(NodeId a, int axis) {
  const Tensor<S>& av = node(a).value;
  const AxisDecomp d = decompose(av.shape, axis, "softmax");
  Tensor<S> out = av;
  for (std::size_t o = 0; o < d.outer; ++o) {
    for (std::size_t i = 0; i < d.inner; ++i) {
      const std::size_t base = o * d.n * d.inner + i;
      S mx = out.data[base];
      for (std::size_t t = 1; t < d.n; ++t) mx = std::max(mx, out.data[base + t * d.inner]);
      S sum = S{0};
      for (std::size_t t = 0; t < d.n; ++t) {
        S e = std::exp(out.data[base + t * d.inner] - mx);
        out.data[base + t * d.inner] = e;
        sum += e;
      }
      for (std::size_t t = 0; t < d.n; ++t) out.data[base + t * d.inner] /= sum;
    }
  }
  return emit(std::move(out), {a}, [a, d](Graph& g, NodeId self) {
    if (!g.node(a).requires_grad) return;
    const Tensor<S>& gv = g.node(self).grad;
    const Tensor<S>& sv = g.node(self).value;
    Tensor<S>& da = g.node(a).grad;
    for (std::size_t o = 0; o < d.outer; ++o) {
      for (std::size_t i = 0; i < d.inner; ++i) {
        const std::size_t base = o * d.n * d.inner + i;
        S dot = S{0};
        for (std::size_t t = 0; t < d.n; ++t) {
          dot += gv.data[base + t * d.inner] * sv.data[base + t * d.inner];
        }
        for (std::size_t t = 0; t < d.n; ++t) {
          const std::size_t k = base + t * d.inner;
          da.data[k] += sv.data[k] * (gv.data[k] - dot);
        }
      }
    }
  });
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::log_softmax(NodeId a, int axis) {
  const Tensor<S>& av = node(a).value;
  const AxisDecomp d = decompose(av.shape, axis, "log_softmax");
  Tensor<S> out = av;
  for (std::size_t o = 0; o < d.outer; ++o) {
    for (std::size_t i = 0; i < d.inner; ++i) {
      const std::size_t base = o * d.n * d.inner + i;
      S mx = out.data[base];
      for (std::size_t t = 1; t < d.n; ++t) mx = std::max(mx, out.data[base + t * d.inner]);
      S sum = S{0};
      for (std::size_t t = 0; t < d.n; ++t) sum += std::exp(out.data[base + t * d.inner] - mx);
      const S lse = mx + std::log(sum);
      for (std::size_t t = 0; t < d.n; ++t) out.data[base + t * d.inner] -= lse;
    }
  }
  return emit(std::move(out), {a}, [a, d](Graph& g, NodeId self) {
    if (!g.node(a).requires_grad) return;
    const Tensor<S>& gv = g.node(self).grad;
    const Tensor<S>& lv = g.node(self).value;
    Tensor<S>& da = g.node(a).grad;
    for (std::size_t o = 0; o < d.outer; ++o) {
      for (std::size_t i = 0; i < d.inner; ++i) {
        const std::size_t base = o * d.n * d.inner + i;
        S gsum = S{0};
        for (std::size_t t = 0; t < d.n; ++t) gsum += gv.data[base + t * d.inner];
        for (std::size_t t = 0; t < d.n; ++t) {
          const std::size_t k = base + t * d.inner;
          da.data[k] += gv.data[k] - std::exp(lv.data[k]) * gsum;
        }
      }
    }
  });
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::reduce_sum(NodeId a, int axis) {
  const Tensor<S>& av = node(a).value;
  const AxisDecomp d = decompose(av.shape, axis, "reduce_sum");
  Tensor<S> out = Tensor<S>::zeros(reduced_shape(av.shape, axis));
  for (std::size_t o = 0; o < d.outer; ++o) {
    for (std::size_t t = 0; t < d.n; ++t) {
      for (std::size_t i = 0; i < d.inner; ++i) {
        out.data[o * d.inner + i] += av.data[(o * d.n + t) * d.inner + i];
      }
    }
  }
  return emit(std::move(out), {a}, [a, d](Graph& g, NodeId self) {
    if (!g.node(a).requires_grad) return;
    const Tensor<S>& gv = g.node(self).grad;
    Tensor<S>& da = g.node(a).grad;
    for (std::size_t o = 0; o < d.outer; ++o) {
      for (std::size_t t = 0; t < d.n; ++t) {
        for (std::size_t i = 0; i < d.inner; ++i) {
          da.data[(o * d.n + t) * d.inner + i] += gv.data[o * d.inner + i];
        }
      }
    }
  });
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::reduce_mean(NodeId a, int axis) {
  const Tensor<S>& av = node(a).value;
  const AxisDecomp d = decompose(av.shape, axis, "reduce_mean");
  const S inv_n = S{1} / static_cast<S>(d.n);
  Tensor<S> out = Tensor<S>::zeros(reduced_shape(av.shape, axis));
  for (std::size_t o = 0; o < d.outer; ++o) {
    for (std::size_t t = 0; t < d.n; ++t) {
      for (std::size_t i = 0; i < d.inner; ++i) {
        out.data[o * d.inner + i] += av.data[(o * d.n + t) * d.inner + i];
      }
    }
  }
  for (S& v : out.data) v *= inv_n;
  return emit(std::move(out), {a}, [a, d, inv_n](Graph& g, NodeId self) {
    if (!g.node(a).requires_grad) return;
    const Tensor<S>& gv = g.node(self).grad;
    Tensor<S>& da = g.node(a).grad;
    for (std::size_t o = 0; o < d.outer; ++o) {
      for (std::size_t t = 0; t < d.n; ++t) {
        for (std::size_t i = 0; i < d.inner; ++i) {
          da.data[(o * d.n + t) * d.inner + i] += gv.data[o * d.inner + i] * inv_n;
        }
      }
    }
  });
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::reduce_std(NodeId a, int axis, S eps) {
  const Tensor<S>& av = node(a).value;
  const AxisDecomp d = decompose(av.shape, axis, "reduce_std");
  if (!(eps > S{0})) throw ContractError("reduce_std: eps must be positive");
  const S inv_n = S{1} / static_cast<S>(d.n);
  Tensor<S> mean = Tensor<S>::zeros(reduced_shape(av.shape, axis));
  Tensor<S> out = Tensor<S>::zeros(reduced_shape(av.shape, axis));
  for (std::size_t o = 0; o < d.outer; ++o) {
    for (std::size_t t = 0; t < d.n; ++t) {
      for (std::size_t i = 0; i < d.inner; ++i) {
        mean.data[o * d.inner + i] += av.data[(o * d.n + t) * d.inner + i];
      }
    }
  }
  for (S& v : mean.data) v *= inv_n;
  for (std::size_t o = 0; o < d.outer; ++o) {
    for (std::size_t t = 0; t < d.n; ++t) {
      for (std::size_t i = 0; i < d.inner; ++i) {
        const S diff = av.data[(o * d.n + t) * d.inner + i] - mean.data[o * d.inner + i];
        out.data[o * d.inner + i] += diff * diff;
      }
    }
  }
  // Population variance plus eps, so constant slices still get a positive std.
  for (S& v : out.data) v = std::sqrt(v * inv_n + eps);
  return emit(std::move(out), {a}, [a, d, inv_n, mean](Graph& g, NodeId self) {
    if (!g.node(a).requires_grad) return;
    const Tensor<S>& gv = g.node(self).grad;
    const Tensor<S>& yv = g.node(self).value;
    const Tensor<S>& av2 = g.node(a).value;
    Tensor<S>& da = g.node(a).grad;
    for (std::size_t o = 0; o < d.outer; ++o) {
      for (std::size_t t = 0; t < d.n; ++t) {
        for (std::size_t i = 0; i < d.inner; ++i) {
          const std::size_t ri = o * d.inner + i;
          const S diff = av2.data[(o * d.n + t) * d.inner + i] - mean.data[ri];
          da.data[(o * d.n + t) * d.inner + i] += gv.data[ri] * diff * inv_n / yv.data[ri];
        }
      }
    }
  });
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::sum_all(NodeId a) {
  const Tensor<S>& av = node(a).value;
  S acc = S{0};
  for (S v : av.data) acc += v;
  return emit(Tensor<S>::scalar(acc), {a}, [a](Graph& g, NodeId self) {
    if (!g.node(a).requires_grad) return;
    const S gv = g.node(self).grad.data[0];
    Tensor<S>& da = g.node(a).grad;
    for (S& v : da.data) v += gv;
  });
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::mean_all(NodeId a) {
  const Tensor<S>& av = node(a).value;
  const S inv_n = S{1} / static_cast<S>(av.numel());
  S acc = S{0};
  for (S v : av.data) acc += v;
  return emit(Tensor<S>::scalar(acc * inv_n), {a}, [a, inv_n](Graph& g, NodeId self) {
    if (!g.node(a).requires_grad) return;
    const S gv = g.node(self).grad.data[0] * inv_n;
    Tensor<S>& da = g.node(a).grad;
    for (S& v : da.data) v += gv;
  });
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::concat_last(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw ContractError("concat_last: no inputs");
  const Tensor<S>& first = node(parts[0]).value;
  const int rank = first.rank();
  std::vector<int> lead(first.shape.begin(), first.shape.end() - 1);
  int total_last = 0;
  std::vector<int> lasts;
  for (NodeId p : parts) {
    const Tensor<S>& pv = node(p).value;
    if (pv.rank() != rank ||
        !std::equal(lead.begin(), lead.end(), pv.shape.begin())) {
      throw DimensionError("concat_last: incompatible shapes " + shape_str(first.shape) +
                           " vs " + shape_str(pv.shape));
    }
    lasts.push_back(pv.shape.back());
    total_last += pv.shape.back();
  }
  std::vector<int> out_shape = first.shape;
  out_shape.back() = total_last;
  std::size_t blocks = 1;
  for (int e : lead) blocks *= static_cast<std::size_t>(e);
  Tensor<S> out = Tensor<S>::zeros(out_shape);
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const Tensor<S>& pv = node(parts[pi]).value;
    const std::size_t w = static_cast<std::size_t>(lasts[pi]);
    for (std::size_t blk = 0; blk < blocks; ++blk) {
      for (std::size_t j = 0; j < w; ++j) {
        out.data[blk * static_cast<std::size_t>(total_last) + offset + j] =
            pv.data[blk * w + j];
      }
    }
    offset += w;
  }
  return emit(std::move(out), parts,
              [parts, lasts, total_last, blocks](Graph& g, NodeId self) {
                const Tensor<S>& gv = g.node(self).grad;
                std::size_t offset = 0;
                for (std::size_t pi = 0; pi < parts.size(); ++pi) {
                  const std::size_t w = static_cast<std::size_t>(lasts[pi]);
                  if (g.node(parts[pi]).requires_grad) {
                    Tensor<S>& dp = g.node(parts[pi]).grad;
                    for (std::size_t blk = 0; blk < blocks; ++blk) {
                      for (std::size_t j = 0; j < w; ++j) {
                        dp.data[blk * w + j] +=
                            gv.data[blk * static_cast<std::size_t>(total_last) + offset + j];
                      }
                    }
                  }
                  offset += w;
                }
              });
}

template <typename S>
typename Graph<S>::NodeId Graph<S>::nll_loss(NodeId log_probs, const std::vector<int>& labels) {
  const Tensor<S>& lv = node(log_probs).value;
  if (lv.rank() != 2) {
    throw DimensionError("nll_loss: log_probs must be 2-D, got " + shape_str(lv.shape));
  }
  const int n = lv.rows(), k = lv.cols();
  if (static_cast<int>(labels.size()) != n) {
    throw DimensionError("nll_loss: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  }
  for (int label : labels) {
    if (label < 0 || label >= k) {
      throw ContractError("nll_loss: label " + std::to_string(label) + " outside [0, " +
                          std::to_string(k) + ")");
    }
  }
  const S inv_n = S{1} / static_cast<S>(n);
  S acc = S{0};
  for (int i = 0; i < n; ++i) acc -= lv.at(i, labels[static_cast<std::size_t>(i)]);
  return emit(Tensor<S>::scalar(acc * inv_n), {log_probs},
              [log_probs, labels, n, inv_n](Graph& g, NodeId self) {
                if (!g.node(log_probs).requires_grad) return;
                const S gv = g.node(self).grad.data[0];
                Tensor<S>& dl = g.node(log_probs).grad;
                for (int i = 0; i < n; ++i) {
                  dl.at(i, labels[static_cast<std::size_t>(i)]) -= gv * inv_n;
                }
              });
}

template struct Tensor<float>;
template struct Tensor<double>;
template class Graph<float>;
template class Graph<double>;
template void assert_finite<float>(const Tensor<float>&, const std::string&);
template void assert_finite<double>(const Tensor<double>&, const std::string&);

}  // namespace spoofdet
