// Copyright (c) 2026 The HTCL Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal tape-based reverse-mode differentiation over row-major float
// matrices. A Graph is built for one forward pass, then `backward` walks the
// tape in reverse. Parameter leaves accumulate into Parameter::grad.

#pragma once

#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "htcl/params.hpp"
#include "htcl/rng.hpp"
#include "htcl/tensor.hpp"

namespace htcl::ag {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Graph {
 public:
  /// With `record` false no backward closures are kept (inference).
  explicit Graph(bool record = true) : record_(record) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }

  Var constant(Matrix value);
  /// Leaf reading `p.value` in place; repeated calls return the same node.
  Var param(Parameter& p);

  const Matrix& value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.param != nullptr ? n.param->value : n.value;
  }
  /// Gradient buffer of a node; zero-filled on first access.
  Matrix& grad(Var v);
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  /// Adds `g` into the gradient of `v` if it participates in differentiation.
  void accumulate(Var v, const Matrix& g);

  // x * w + b, with b a 1 x out row broadcast over rows.
  Var linear(Var x, Var w, Var b);
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var add_rows(Var x, Var row);
  Var gelu(Var x);
  /// Normalizes each row; gamma/beta are 1 x cols.
  Var layer_norm(Var x, Var gamma, Var beta, float eps = 1e-5f);
  /// Unfolds time windows of a T x C sequence into rows of length kernel*C,
  /// with `pad` zero rows on each side.
  Var im2col(Var x, int kernel, int stride, int pad);
  Var slice_rows(Var x, Eigen::Index begin, Eigen::Index count);
  Var gather_rows(Var table, std::span<const int> ids);
  Var mean_rows(Var x);
  Var l2_normalize_rows(Var x);
  Var stack_rows(std::span<const Var> rows);
  /// Multi-head scaled dot-product self-attention over packed q|k|v columns
  /// (T x 3H). Returns T x H.
  Var self_attention(Var qkv, int heads);
  /// Inverted dropout; identity when p == 0.
  Var dropout(Var x, float p, Rng& rng);

  /// Node whose backward is supplied by the caller. `backward` receives the
  /// output gradient and must accumulate into `grad(parent)` itself.
  Var custom(std::vector<Var> parents, Matrix value,
             std::function<void(Graph&, const Matrix&)> backward);

  /// Seeds d(root)/d(root) = 1 for a 1x1 root (or `seed` otherwise) and runs
  /// the tape in reverse.
  void backward(Var root);
  void backward(Var root, const Matrix& seed);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Parameter* param = nullptr;
    std::function<void(Graph&, const Matrix&)> backward;
  };

  Var push(Matrix value, std::initializer_list<Var> parents,
           std::function<void(Graph&, const Matrix&)> backward);
  Var push(Matrix value, const std::vector<Var>& parents,
           std::function<void(Graph&, const Matrix&)> backward);

  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

}  // namespace htcl::ag
