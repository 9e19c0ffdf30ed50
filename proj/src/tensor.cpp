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

#include "lite/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "lite/errors.hpp"
#include "lite/kernels.hpp"

namespace lite {

namespace {

thread_local bool t_grad_enabled = true;

void add_into(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// Grad buffer of parent `i`, or empty when that parent does not want one.
std::span<double> parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return {};
  return p.grad_buffer();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(a.shape()));
  }
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::span<double> Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("Tensor: shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " elements, got " +
                         std::to_string(data.size()));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng, bool requires_grad) {
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::normal(Shape shape, double mean, double stddev, Rng& rng, bool requires_grad) {
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = rng.normal(mean, stddev);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item: tensor " + shape_str(shape()) + " is not a scalar");
  return node_->data[0];
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data, false); }

Tensor Tensor::clone() const { return Tensor(node_->shape, node_->data, node_->requires_grad); }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

Tensor make_op_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                      const char* op, BackwardFn fn) {
  Tensor out(std::move(shape), std::move(data), false);
  Node& node = *out.node();
  node.op = op;
  if (!t_grad_enabled) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (!any) return out;
  node.requires_grad = true;
  node.parents.reserve(inputs.size());
  for (const Tensor& t : inputs) node.parents.push_back(t.node());
  node.backward_fn = std::move(fn);
  return out;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward: loss is not connected to any tensor that requires grad");
  }
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !parent->parents.empty() && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }
  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, "add", [](Node& self) {
    for (std::size_t i = 0; i < 2; ++i) {
      auto g = parent_grad(self, i);
      if (!g.empty()) add_into(g, self.grad);
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, "sub", [](Node& self) {
    if (auto g = parent_grad(self, 0); !g.empty()) add_into(g, self.grad);
    if (auto g = parent_grad(self, 1); !g.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_op_result(a.shape(), std::move(out), {a, b}, "mul", [](Node& self) {
    const auto& ad = self.parents[0]->data;
    const auto& bd = self.parents[1]->data;
    if (auto g = parent_grad(self, 0); !g.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bd[i];
    }
    if (auto g = parent_grad(self, 1); !g.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * ad[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return make_op_result(a.shape(), std::move(out), {a}, "scale", [factor](Node& self) {
    auto g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || x.rank() == 0 || x.shape().back() != bias.dim(0)) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match input " +
                         shape_str(x.shape()));
  }
  const std::size_t n = bias.dim(0);
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias.data()[i % n];
  return make_op_result(x.shape(), std::move(out), {x, bias}, "add_bias", [n](Node& self) {
    if (auto g = parent_grad(self, 0); !g.empty()) add_into(g, self.grad);
    if (auto g = parent_grad(self, 1); !g.empty()) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0);
  const std::size_t k = a.dim(1);
  const std::size_t n = b.dim(1);
  std::vector<double> out(m * n);
  kernels::matmul(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_op_result({m, n}, std::move(out), {a, b}, "matmul", [m, k, n](Node& self) {
    if (auto g = parent_grad(self, 0); !g.empty()) {
      std::vector<double> tmp(m * k);
      kernels::matmul_nt(self.grad.data(), self.parents[1]->data.data(), tmp.data(), m, n, k);
      add_into(g, tmp);
    }
    if (auto g = parent_grad(self, 1); !g.empty()) {
      std::vector<double> tmp(k * n);
      kernels::matmul_tn(self.parents[0]->data.data(), self.grad.data(), tmp.data(), k, m, n);
      add_into(g, tmp);
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  if (a.dim(1) != b.dim(1)) {
    throw DimensionError("matmul_nt: inner dimensions disagree, " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()) + "^T");
  }
  const std::size_t m = a.dim(0);
  const std::size_t k = a.dim(1);
  const std::size_t n = b.dim(0);
  std::vector<double> out(m * n);
  kernels::matmul_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_op_result({m, n}, std::move(out), {a, b}, "matmul_nt", [m, k, n](Node& self) {
    if (auto g = parent_grad(self, 0); !g.empty()) {
      std::vector<double> tmp(m * k);
      kernels::matmul(self.grad.data(), self.parents[1]->data.data(), tmp.data(), m, n, k);
      add_into(g, tmp);
    }
    if (auto g = parent_grad(self, 1); !g.empty()) {
      std::vector<double> tmp(n * k);
      kernels::matmul_tn(self.grad.data(), self.parents[0]->data.data(), tmp.data(), n, m, k);
      add_into(g, tmp);
    }
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  return make_op_result(x.shape(), std::move(out), {x}, "relu", [](Node& self) {
    auto g = parent_grad(self, 0);
    const auto& xd = self.parents[0]->data;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xd[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x.data()[i]));
  return make_op_result(x.shape(), std::move(out), {x}, "sigmoid", [](Node& self) {
    auto g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = self.data[i];
      g[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                         shape_str(x.shape()));
  }
  const Shape& s = x.shape();
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  const std::size_t n = s[axis];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  std::vector<double> out(x.numel());
  const auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xd[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(xd[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  }
  return make_op_result(s, std::move(out), {x}, "softmax", [outer, n, inner](Node& self) {
    auto g = parent_grad(self, 0);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += self.data[base + j * inner] * self.grad[base + j * inner];
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t idx = base + j * inner;
          g[idx] += self.data[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  if (x.rank() == 0) throw DimensionError("log_softmax: scalar input");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  std::vector<double> out(x.numel());
  const auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xd.data() + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(xr[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = xr[j] - lse;
  }
  return make_op_result(x.shape(), std::move(out), {x}, "log_softmax", [rows, n](Node& self) {
    auto g = parent_grad(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) gsum += self.grad[r * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t idx = r * n + j;
        g[idx] += self.grad[idx] - std::exp(self.data[idx]) * gsum;
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0 || gamma.rank() != 1 || beta.rank() != 1 ||
      gamma.dim(0) != x.shape().back() || beta.dim(0) != x.shape().back()) {
    throw DimensionError("layer_norm: gamma " + shape_str(gamma.shape()) + " / beta " +
                         shape_str(beta.shape()) + " do not match input " + shape_str(x.shape()));
  }
  const std::size_t d = gamma.dim(0);
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  // Normalized activations and reciprocal std are kept for backward.
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  const auto xd = x.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xd.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - mu) * rs;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gd[j] + bd[j];
    }
  }
  return make_op_result(x.shape(), std::move(out), {x, gamma, beta}, "layer_norm",
                        [rows, d, xhat, rstd](Node& self) {
    const auto& gd = self.parents[1]->data;
    auto gx = parent_grad(self, 0);
    auto gg = parent_grad(self, 1);
    auto gb = parent_grad(self, 2);
    std::vector<double> dxhat(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* dy = self.grad.data() + r * d;
      const double* h = xhat->data() + r * d;
      if (!gg.empty()) {
        for (std::size_t j = 0; j < d; ++j) gg[j] += dy[j] * h[j];
      }
      if (!gb.empty()) {
        for (std::size_t j = 0; j < d; ++j) gb[j] += dy[j];
      }
      if (gx.empty()) continue;
      double mean_dxhat = 0.0;
      double mean_dxhat_h = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        dxhat[j] = dy[j] * gd[j];
        mean_dxhat += dxhat[j];
        mean_dxhat_h += dxhat[j] * h[j];
      }
      mean_dxhat /= static_cast<double>(d);
      mean_dxhat_h /= static_cast<double>(d);
      const double rs = (*rstd)[r];
      for (std::size_t j = 0; j < d; ++j) {
        gx[r * d + j] += rs * (dxhat[j] - mean_dxhat - h[j] * mean_dxhat_h);
      }
    }
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_op_result({1}, {total}, {x}, "sum", [](Node& self) {
    auto g = parent_grad(self, 0);
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ContractError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_op_result(std::move(shape), std::move(out), {x}, "reshape", [](Node& self) {
    auto g = parent_grad(self, 0);
    add_into(g, self.grad);
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank2(x, "slice_cols");
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  if (begin + count > cols) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + shape_str(x.shape()));
  }
  std::vector<double> out(rows * count);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.data().data() + r * cols + begin, count, out.data() + r * count);
  }
  return make_op_result({rows, count}, std::move(out), {x}, "slice_cols",
                        [rows, cols, begin, count](Node& self) {
    auto g = parent_grad(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < count; ++j) g[r * cols + begin + j] += self.grad[r * count + j];
    }
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank2(a, "concat_cols");
  require_rank2(b, "concat_cols");
  if (a.dim(0) != b.dim(0)) {
    throw DimensionError("concat_cols: row counts differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  const std::size_t rows = a.dim(0);
  const std::size_t ca = a.dim(1);
  const std::size_t cb = b.dim(1);
  std::vector<double> out(rows * (ca + cb));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(b.data().data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  return make_op_result({rows, ca + cb}, std::move(out), {a, b}, "concat_cols",
                        [rows, ca, cb](Node& self) {
    auto ga = parent_grad(self, 0);
    auto gb = parent_grad(self, 1);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* src = self.grad.data() + r * (ca + cb);
      if (!ga.empty()) {
        for (std::size_t j = 0; j < ca; ++j) ga[r * ca + j] += src[j];
      }
      if (!gb.empty()) {
        for (std::size_t j = 0; j < cb; ++j) gb[r * cb + j] += src[ca + j];
      }
    }
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank2(x, "slice_rows");
  const std::size_t cols = x.dim(1);
  if (begin + count > x.dim(0)) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + shape_str(x.shape()));
  }
  std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                          x.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * cols));
  return make_op_result({count, cols}, std::move(out), {x}, "slice_rows",
                        [begin, cols](Node& self) {
    auto g = parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * cols + i] += self.grad[i];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t cols = parts.front().dim(1);
  std::size_t rows = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.dim(1) != cols) {
      throw DimensionError("concat_rows: column counts differ, " + shape_str(parts.front().shape()) +
                           " vs " + shape_str(p.shape()));
    }
    rows += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_op_result({rows, cols}, std::move(out), parts, "concat_rows", [](Node& self) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      const std::size_t n = self.parents[i]->data.size();
      if (auto g = parent_grad(self, i); !g.empty()) {
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[offset + j];
      }
      offset += n;
    }
  });
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  require_rank2(table, "gather_rows");
  const std::size_t vocab = table.dim(0);
  const std::size_t d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw IndexError("token id " + std::to_string(ids[i]) + " out of range for vocabulary of " +
                       std::to_string(vocab));
    }
    std::copy_n(table.data().data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  std::vector<int> kept(ids.begin(), ids.end());
  return make_op_result({ids.size(), d}, std::move(out), {table}, "gather_rows",
                        [kept = std::move(kept), d](Node& self) {
    auto g = parent_grad(self, 0);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      double* row = g.data() + static_cast<std::size_t>(kept[i]) * d;
      for (std::size_t j = 0; j < d; ++j) row[j] += self.grad[i * d + j];
    }
  });
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ContractError("dropout: p must be in [0, 1)");
  if (p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.uniform() < p ? 0.0 : keep_scale;
    out[i] = x.data()[i] * (*mask)[i];
  }
  return make_op_result(x.shape(), std::move(out), {x}, "dropout", [mask](Node& self) {
    auto g = parent_grad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
  });
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw DimensionError("at(row, col): tensor has shape " + shape_str(shape()));
  if (row >= dim(0) || col >= dim(1)) {
    throw IndexError("at(" + std::to_string(row) + ", " + std::to_string(col) + ") outside " + shape_str(shape()));
  }
  return node_->data[row * dim(1) + col];
}

double finite_diff_check(const std::function<Tensor()>& f, Tensor& theta, double step) {
  if (step <= 0.0) throw ContractError("finite_diff_check: step must be positive");
  if (!theta.requires_grad()) throw ContractError("finite_diff_check: theta must require grad");
  theta.zero_grad();
  const Tensor loss = f();
  if (!std::isfinite(loss.item())) throw NumericError("finite_diff_check: f returned " + std::to_string(loss.item()));
  backward(loss);
  std::vector<double> analytic(theta.numel(), 0.0);
  if (theta.has_grad()) std::copy(theta.grad().begin(), theta.grad().end(), analytic.begin());

  NoGradGuard no_grad;
  auto values = theta.mutable_data();
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + step;
    const double up = f().item();
    values[i] = saved - step;
    const double down = f().item();
    values[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_check: non-finite f at coordinate " + std::to_string(i));
    }
    const double central = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(central), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - central) / denom);
  }
  return worst;
}

}  // namespace lite
