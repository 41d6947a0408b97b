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

#include "htcl/autograd.hpp"

#include <cmath>
#include <utility>

#include "htcl/error.hpp"

namespace htcl::ag {

namespace {

constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2/pi)

float gelu_value(float x) {
  return 0.5f * x * (1.0f + std::tanh(kGeluC * (x + 0.044715f * x * x * x)));
}

float gelu_derivative(float x) {
  const float t = std::tanh(kGeluC * (x + 0.044715f * x * x * x));
  return 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * kGeluC * (1.0f + 3.0f * 0.044715f * x * x);
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InputError(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Var Graph::push(Matrix value, std::initializer_list<Var> parents,
                std::function<void(Graph&, const Matrix&)> backward) {
  return push(std::move(value), std::vector<Var>(parents), std::move(backward));
}

Var Graph::push(Matrix value, const std::vector<Var>& parents,
                std::function<void(Graph&, const Matrix&)> backward) {
  Node node;
  node.value = std::move(value);
  if (record_) {
    for (Var p : parents) node.needs_grad = node.needs_grad || nodes_[p.id].needs_grad;
    if (node.needs_grad) node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Matrix& Graph::grad(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() == 0) {
    const Matrix& val = value(v);
    n.grad = Matrix::Zero(val.rows(), val.cols());
  }
  return n.grad;
}

void Graph::accumulate(Var v, const Matrix& g) {
  if (!nodes_[v.id].needs_grad) return;
  grad(v) += g;
}

Var Graph::constant(Matrix value) { return push(std::move(value), {}, nullptr); }

Var Graph::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{it->second};
  Node node;
  node.param = &p;
  node.needs_grad = record_;
  nodes_.push_back(std::move(node));
  param_nodes_.emplace(&p, static_cast<int>(nodes_.size() - 1));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Graph::linear(Var x, Var w, Var b) {
  const Matrix& xv = value(x);
  const Matrix& wv = value(w);
  if (xv.cols() != wv.rows() || value(b).cols() != wv.cols()) {
    throw InputError("linear: shape mismatch");
  }
  Matrix out = xv * wv;
  out.rowwise() += value(b).row(0);
  return push(std::move(out), {x, w, b}, [x, w, b](Graph& g, const Matrix& d) {
    if (g.needs_grad(x)) g.accumulate(x, d * g.value(w).transpose());
    if (g.needs_grad(w)) g.accumulate(w, g.value(x).transpose() * d);
    if (g.needs_grad(b)) g.accumulate(b, d.colwise().sum());
  });
}

Var Graph::matmul(Var a, Var b) {
  if (value(a).cols() != value(b).rows()) throw InputError("matmul: shape mismatch");
  Matrix out = value(a) * value(b);
  return push(std::move(out), {a, b}, [a, b](Graph& g, const Matrix& d) {
    if (g.needs_grad(a)) g.accumulate(a, d * g.value(b).transpose());
    if (g.needs_grad(b)) g.accumulate(b, g.value(a).transpose() * d);
  });
}

Var Graph::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Matrix out = value(a) + value(b);
  return push(std::move(out), {a, b}, [a, b](Graph& g, const Matrix& d) {
    g.accumulate(a, d);
    g.accumulate(b, d);
  });
}

Var Graph::add_rows(Var x, Var row) {
  if (value(row).rows() != 1 || value(row).cols() != value(x).cols()) {
    throw InputError("add_rows: shape mismatch");
  }
  Matrix out = value(x);
  out.rowwise() += value(row).row(0);
  return push(std::move(out), {x, row}, [x, row](Graph& g, const Matrix& d) {
    g.accumulate(x, d);
    if (g.needs_grad(row)) g.accumulate(row, d.colwise().sum());
  });
}

Var Graph::gelu(Var x) {
  Matrix out = value(x).unaryExpr(&gelu_value);
  return push(std::move(out), {x}, [x](Graph& g, const Matrix& d) {
    g.accumulate(x, (d.array() * g.value(x).unaryExpr(&gelu_derivative).array()).matrix());
  });
}

Var Graph::layer_norm(Var x, Var gamma, Var beta, float eps) {
  const Matrix& xv = value(x);
  const Eigen::Index n = xv.cols();
  if (value(gamma).cols() != n || value(beta).cols() != n) {
    throw InputError("layer_norm: shape mismatch");
  }
  Matrix normalized(xv.rows(), n);
  Eigen::VectorXf inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const float mean = xv.row(r).mean();
    const float var = (xv.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0f / std::sqrt(var + eps);
    normalized.row(r) = (xv.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = normalized.array().rowwise() * value(gamma).row(0).array();
  out.rowwise() += value(beta).row(0);
  return push(std::move(out), {x, gamma, beta},
              [x, gamma, beta, normalized = std::move(normalized),
               inv_std = std::move(inv_std)](Graph& g, const Matrix& d) {
                if (g.needs_grad(gamma)) {
                  g.accumulate(gamma, (d.array() * normalized.array()).colwise().sum().matrix());
                }
                if (g.needs_grad(beta)) g.accumulate(beta, d.colwise().sum());
                if (!g.needs_grad(x)) return;
                const Matrix d_norm = d.array().rowwise() * g.value(gamma).row(0).array();
                Matrix dx(d.rows(), d.cols());
                for (Eigen::Index r = 0; r < d.rows(); ++r) {
                  const float mean_d = d_norm.row(r).mean();
                  const float mean_dn = (d_norm.row(r).array() * normalized.row(r).array()).mean();
                  dx.row(r) = (d_norm.row(r).array() - mean_d -
                               normalized.row(r).array() * mean_dn) *
                              inv_std(r);
                }
                g.accumulate(x, dx);
              });
}

Var Graph::im2col(Var x, int kernel, int stride, int pad) {
  const Matrix& xv = value(x);
  const Eigen::Index len = xv.rows();
  const Eigen::Index ch = xv.cols();
  const Eigen::Index out_len = (len + 2 * pad - kernel) / stride + 1;
  if (out_len < 1) throw InputTooShortError("im2col: input shorter than kernel");
  Matrix cols = Matrix::Zero(out_len, kernel * ch);
  for (Eigen::Index t = 0; t < out_len; ++t) {
    for (int k = 0; k < kernel; ++k) {
      const Eigen::Index src = t * stride - pad + k;
      if (src < 0 || src >= len) continue;
      cols.block(t, k * ch, 1, ch) = xv.row(src);
    }
  }
  return push(std::move(cols), {x}, [x, kernel, stride, pad, len, ch](Graph& g, const Matrix& d) {
    if (!g.needs_grad(x)) return;
    Matrix dx = Matrix::Zero(len, ch);
    for (Eigen::Index t = 0; t < d.rows(); ++t) {
      for (int k = 0; k < kernel; ++k) {
        const Eigen::Index src = t * stride - pad + k;
        if (src < 0 || src >= len) continue;
        dx.row(src) += d.block(t, k * ch, 1, ch);
      }
    }
    g.accumulate(x, dx);
  });
}

Var Graph::slice_rows(Var x, Eigen::Index begin, Eigen::Index count) {
  const Matrix& xv = value(x);
  if (begin < 0 || count < 0 || begin + count > xv.rows()) {
    throw InputError("slice_rows: range out of bounds");
  }
  Matrix out = xv.middleRows(begin, count);
  return push(std::move(out), {x}, [x, begin, count](Graph& g, const Matrix& d) {
    if (!g.needs_grad(x)) return;
    g.grad(x).middleRows(begin, count) += d;
  });
}

Var Graph::gather_rows(Var table, std::span<const int> ids) {
  const Matrix& tv = value(table);
  Matrix out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows()) {
      throw InputError("gather_rows: id " + std::to_string(ids[i]) + " out of range");
    }
    out.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return push(std::move(out), {table}, [table, idx = std::move(idx)](Graph& g, const Matrix& d) {
    if (!g.needs_grad(table)) return;
    Matrix& gt = g.grad(table);
    for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += d.row(static_cast<Eigen::Index>(i));
  });
}

Var Graph::mean_rows(Var x) {
  const Matrix& xv = value(x);
  if (xv.rows() == 0) throw InputError("mean_rows: empty input");
  Matrix out = xv.colwise().mean();
  const Eigen::Index rows = xv.rows();
  return push(std::move(out), {x}, [x, rows](Graph& g, const Matrix& d) {
    if (!g.needs_grad(x)) return;
    g.grad(x).rowwise() += d.row(0) / static_cast<float>(rows);
  });
}

Var Graph::l2_normalize_rows(Var x) {
  const Matrix& xv = value(x);
  Eigen::VectorXf norms = xv.rowwise().norm();
  for (Eigen::Index r = 0; r < norms.size(); ++r) {
    if (!(norms(r) > 1e-12f) || !std::isfinite(norms(r))) {
      throw NumericError("l2_normalize: zero or non-finite vector");
    }
  }
  Matrix out = xv.array().colwise() / norms.array();
  Matrix unit = out;
  return push(std::move(out), {x},
              [x, unit = std::move(unit), norms = std::move(norms)](Graph& g, const Matrix& d) {
                if (!g.needs_grad(x)) return;
                const Eigen::VectorXf dots = (unit.array() * d.array()).rowwise().sum();
                Matrix dx = d - (unit.array().colwise() * dots.array()).matrix();
                dx = dx.array().colwise() / norms.array();
                g.accumulate(x, dx);
              });
}

Var Graph::stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw InputError("stack_rows: empty");
  Eigen::Index total = 0;
  const Eigen::Index cols = value(rows[0]).cols();
  for (Var r : rows) {
    if (value(r).cols() != cols) throw InputError("stack_rows: column mismatch");
    total += value(r).rows();
  }
  Matrix out(total, cols);
  Eigen::Index at = 0;
  for (Var r : rows) {
    out.middleRows(at, value(r).rows()) = value(r);
    at += value(r).rows();
  }
  std::vector<Var> parents(rows.begin(), rows.end());
  return push(std::move(out), parents, [parents](Graph& g, const Matrix& d) {
    Eigen::Index offset = 0;
    for (Var p : parents) {
      const Eigen::Index n = g.value(p).rows();
      if (g.needs_grad(p)) g.grad(p) += d.middleRows(offset, n);
      offset += n;
    }
  });
}

Var Graph::self_attention(Var qkv, int heads) {
  const Matrix& in = value(qkv);
  if (in.cols() % 3 != 0 || (in.cols() / 3) % heads != 0) {
    throw InputError("self_attention: hidden size not divisible by heads");
  }
  const Eigen::Index len = in.rows();
  const Eigen::Index hidden = in.cols() / 3;
  const Eigen::Index head_dim = hidden / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(head_dim));
  Matrix out(len, hidden);
  std::vector<Matrix> probs(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const auto q = in.middleCols(h * head_dim, head_dim);
    const auto k = in.middleCols(hidden + h * head_dim, head_dim);
    const auto v = in.middleCols(2 * hidden + h * head_dim, head_dim);
    Matrix p = (q * k.transpose()) * scale;
    for (Eigen::Index r = 0; r < len; ++r) {
      const float m = p.row(r).maxCoeff();
      p.row(r) = (p.row(r).array() - m).exp();
      p.row(r) /= p.row(r).sum();
    }
    out.middleCols(h * head_dim, head_dim) = p * v;
    probs[static_cast<std::size_t>(h)] = std::move(p);
  }
  return push(std::move(out), {qkv},
              [qkv, heads, hidden, head_dim, scale, probs = std::move(probs)](Graph& g,
                                                                             const Matrix& d) {
                if (!g.needs_grad(qkv)) return;
                const Matrix& in = g.value(qkv);
                Matrix din = Matrix::Zero(in.rows(), in.cols());
                for (int h = 0; h < heads; ++h) {
                  const Matrix& p = probs[static_cast<std::size_t>(h)];
                  const auto q = in.middleCols(h * head_dim, head_dim);
                  const auto k = in.middleCols(hidden + h * head_dim, head_dim);
                  const auto v = in.middleCols(2 * hidden + h * head_dim, head_dim);
                  const auto dout = d.middleCols(h * head_dim, head_dim);
                  const Matrix dp = dout * v.transpose();
                  din.middleCols(2 * hidden + h * head_dim, head_dim) = p.transpose() * dout;
                  const Eigen::VectorXf row_dot = (dp.array() * p.array()).rowwise().sum();
                  const Matrix ds = (p.array() * (dp.array().colwise() - row_dot.array())).matrix();
                  din.middleCols(h * head_dim, head_dim) = (ds * k) * scale;
                  din.middleCols(hidden + h * head_dim, head_dim) = (ds.transpose() * q) * scale;
                }
                g.accumulate(qkv, din);
              });
}

Var Graph::dropout(Var x, float p, Rng& rng) {
  if (p <= 0.0f) return x;
  if (p >= 1.0f) throw InputError("dropout: probability must be < 1");
  const Matrix& xv = value(x);
  Matrix mask(xv.rows(), xv.cols());
  const float keep = 1.0f / (1.0f - p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng.uniform() < p ? 0.0f : keep;
  }
  Matrix out = xv.array() * mask.array();
  return push(std::move(out), {x}, [x, mask = std::move(mask)](Graph& g, const Matrix& d) {
    g.accumulate(x, (d.array() * mask.array()).matrix());
  });
}

Var Graph::custom(std::vector<Var> parents, Matrix value,
                  std::function<void(Graph&, const Matrix&)> backward) {
  return push(std::move(value), parents, std::move(backward));
}

void Graph::backward(Var root) {
  if (value(root).size() != 1) throw InputError("backward: root must be a scalar");
  backward(root, Matrix::Ones(1, 1));
}

void Graph::backward(Var root, const Matrix& seed) {
  if (!record_) throw InputError("backward: graph was built without recording");
  if (!nodes_[root.id].needs_grad) return;
  grad(root) += seed;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      if (n.param->grad.size() == 0) n.param->zero_grad();
      n.param->grad += n.grad;
    } else if (n.backward) {
      // Copy: the closure may append to nodes_ indirectly via grad().
      const Matrix d = n.grad;
      n.backward(*this, d);
    }
  }
}

}  // namespace htcl::ag
