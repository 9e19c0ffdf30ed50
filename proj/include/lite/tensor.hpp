// Copyright 2026 The litetr Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Dense n-dimensional array with dynamic reverse-mode differentiation.
//
// A Tensor is a shared handle to a node. Ops record their inputs and a
// backward closure on the output node when any input requires grad (and grad
// mode is on); backward() walks that graph in reverse topological order.
// Graphs are confined to the thread that built them.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lite/rng.hpp"

namespace lite {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node& self)>;

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  BackwardFn backward_fn;
  const char* op = "leaf";

  /// Grad buffer sized like data, allocated on first use.
  std::span<double> grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng, bool requires_grad = false);
  static Tensor normal(Shape shape, double mean, double stddev, Rng& rng,
                       bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  /// Writable view. Only for leaves that no live graph depends on.
  std::span<double> mutable_data() { return node_->data; }
  double at(std::size_t flat) const { return node_->data.at(flat); }
  /// Element (row, col) of a rank-2 tensor.
  double at(std::size_t row, std::size_t col) const;
  double item() const;

  std::span<const double> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad.clear(); }

  /// Same data, no graph history, no grad.
  Tensor detach() const;
  /// Data copy in a fresh leaf.
  Tensor clone() const;

  const NodePtr& node() const { return node_; }
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

 private:
  NodePtr node_;
};

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Builds an op output. Inputs that require grad become parents and `fn`
/// is attached; otherwise the result is a plain leaf.
Tensor make_op_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                      const char* op, BackwardFn fn);

/// Populates grads of every requires_grad tensor reachable from `loss`.
/// Gradients add to whatever is already stored.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Ops. Unless noted, shapes must match exactly.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// x[..., n] + bias[n] broadcast over leading axes.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor matmul(const Tensor& a, const Tensor& b);
/// a[m,k] * b[n,k]^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor softmax(const Tensor& x, std::size_t axis);
/// log-softmax over the last axis.
Tensor log_softmax(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

/// Columns [begin, begin+count) of a rank-2 tensor.
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_cols(const Tensor& a, const Tensor& b);
/// Rows [begin, begin+count) of a rank-2 tensor.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_rows(const std::vector<Tensor>& parts);
/// out[i, :] = table[ids[i], :]
Tensor gather_rows(const Tensor& table, std::span<const int> ids);

/// Inverted dropout; identity when p == 0.
Tensor dropout(const Tensor& x, double p, Rng& rng);

/// Max over coordinates of |analytic - central| / max(|analytic|, |central|, 1e-8)
/// for d f / d theta. `f` must be deterministic and read theta's data.
double finite_diff_check(const std::function<Tensor()>& f, Tensor& theta, double step);

}  // namespace lite
