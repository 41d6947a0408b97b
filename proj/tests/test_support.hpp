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

// Shared helpers for the unit tests: random unit rows and naive reference
// implementations written independently of the library code.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "htcl/tensor.hpp"

namespace htcl::testing {

inline MatrixD random_unit_rows(int rows, int cols, std::mt19937_64& gen) {
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixD m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < cols; ++j) {
      m(i, j) = n(gen);
      s += m(i, j) * m(i, j);
    }
    for (int j = 0; j < cols; ++j) m(i, j) /= std::sqrt(s);
  }
  return m;
}

/// Softmax cross-entropy over explicit double loops, in long double.
inline double naive_directional(const MatrixD& q, const MatrixD& k, double tau) {
  const int b = static_cast<int>(q.rows());
  long double total = 0.0L;
  for (int i = 0; i < b; ++i) {
    std::vector<long double> logits(b);
    for (int j = 0; j < b; ++j) {
      long double dot = 0.0L;
      for (int d = 0; d < q.cols(); ++d) dot += static_cast<long double>(q(i, d)) * k(j, d);
      logits[j] = dot / tau;
    }
    long double z = 0.0L;
    for (int j = 0; j < b; ++j) z += std::exp(logits[j]);
    total += -std::log(std::exp(logits[i]) / z);
  }
  return static_cast<double>(total / b);
}

/// Central differences of f with respect to every entry of x.
inline MatrixD numeric_grad(MatrixD& x, const std::function<double()>& f, double step = 1e-4) {
  MatrixD g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double keep = x(i, j);
      x(i, j) = keep + step;
      const double up = f();
      x(i, j) = keep - step;
      const double down = f();
      x(i, j) = keep;
      g(i, j) = (up - down) / (2.0 * step);
    }
  }
  return g;
}

inline double relative_error(const MatrixD& analytic, const MatrixD& numeric) {
  const double denom = std::max(analytic.norm() + numeric.norm(), 1e-12);
  return (analytic - numeric).norm() / denom;
}

inline double naive_symmetric(const MatrixD& a, const MatrixD& b, double tau) {
  return naive_directional(a, b, tau) + naive_directional(b, a, tau);
}

}  // namespace htcl::testing
