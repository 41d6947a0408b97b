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

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "htcl/rng.hpp"
#include "htcl/tensor.hpp"

namespace htcl {

/// Learning-rate group a parameter belongs to.
enum class ParamGroup { kAudio, kText, kFusion, kLoss };

const char* to_string(ParamGroup group);

struct Parameter {
  std::string name;
  ParamGroup group = ParamGroup::kAudio;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Named tensors under stable string keys. Iteration is in key order, which
/// makes every whole-model walk (init, optimizer, checkpoint) deterministic.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Eigen::Index rows, Eigen::Index cols, ParamGroup group);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  void erase(const std::string& name) { params_.erase(name); }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  std::size_t scalar_count(ParamGroup group) const;

  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Parameter> params_;
};

/// Fills with U(-bound, bound).
void init_uniform(Matrix& m, double bound, Rng& rng);
/// Fills with N(0, stddev^2).
void init_normal(Matrix& m, double stddev, Rng& rng);

}  // namespace htcl
