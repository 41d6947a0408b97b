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

#include "htcl/params.hpp"

#include "htcl/error.hpp"

namespace htcl {

const char* to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::kAudio:
      return "audio";
    case ParamGroup::kText:
      return "text";
    case ParamGroup::kFusion:
      return "fusion";
    case ParamGroup::kLoss:
      return "loss";
  }
  return "unknown";
}

Parameter& ParamStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                           ParamGroup group) {
  auto [it, inserted] = params_.try_emplace(name);
  if (!inserted) throw InputError("duplicate parameter name: " + name);
  Parameter& p = it->second;
  p.name = name;
  p.group = group;
  p.value = Matrix::Zero(rows, cols);
  p.grad = Matrix::Zero(rows, cols);
  return p;
}

Parameter& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw InputError("unknown parameter: " + name);
  return it->second;
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw InputError("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

std::size_t ParamStore::scalar_count(ParamGroup group) const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) {
    if (p.group == group) n += static_cast<std::size_t>(p.value.size());
  }
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

void init_uniform(Matrix& m, double bound, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<float>(rng.uniform(-bound, bound));
  }
}

void init_normal(Matrix& m, double stddev, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<float>(rng.normal() * stddev);
  }
}

}  // namespace htcl
