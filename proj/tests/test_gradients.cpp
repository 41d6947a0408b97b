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

#include <gtest/gtest.h>

#include <random>

#include "htcl/contrastive_core.hpp"
#include "test_support.hpp"

namespace htcl {
namespace {

using testing::random_unit_rows;

constexpr double kTolerance = 1e-4;

using testing::numeric_grad;
using testing::relative_error;

TEST(Gradients, SymmetricLossInputsAndTemperature) {
  std::mt19937_64 gen(21);
  MatrixD a = random_unit_rows(4, 8, gen);
  MatrixD t = random_unit_rows(4, 8, gen);
  MatrixD tau(1, 1);
  tau(0, 0) = 0.3;
  PairGrad<double> g;
  symmetric_loss<double>(a, t, tau(0, 0), &g);
  const auto f = [&] { return symmetric_loss<double>(a, t, tau(0, 0)).total; };
  EXPECT_LT(relative_error(g.d_query, numeric_grad(a, f)), kTolerance);
  EXPECT_LT(relative_error(g.d_key, numeric_grad(t, f)), kTolerance);
  MatrixD dtau(1, 1);
  dtau(0, 0) = g.d_tau;
  EXPECT_LT(relative_error(dtau, numeric_grad(tau, f)), kTolerance);
}

TEST(Gradients, DirectionalLossWithScale) {
  std::mt19937_64 gen(22);
  MatrixD q = random_unit_rows(4, 8, gen);
  MatrixD k = random_unit_rows(4, 8, gen);
  PairGrad<double> g;
  info_nce_directional<double>(q, k, 0.5, &g, 2.5);
  const auto f = [&] { return 2.5 * info_nce_directional<double>(q, k, 0.5); };
  EXPECT_LT(relative_error(g.d_query, numeric_grad(q, f)), kTolerance);
  EXPECT_LT(relative_error(g.d_key, numeric_grad(k, f)), kTolerance);
}

class Stage2Gradients : public ::testing::TestWithParam<bool> {};

TEST_P(Stage2Gradients, AllInputsFusionAndTemperature) {
  const bool text_terms = GetParam();
  std::mt19937_64 gen(23);
  Rng rng(8);
  const int b = 4;
  const int d = 8;
  MatrixD trig = random_unit_rows(b, d, gen);
  MatrixD rec = random_unit_rows(b, d, gen);
  MatrixD text = random_unit_rows(b, d, gen);
  FusionParams<double> fp = FusionParams<double>::init(d, 2 * d, rng);
  LossConfig cfg;
  cfg.temperature = 0.25;
  cfg.w_aa = 1.0;
  cfg.w_af = 0.7;
  cfg.w_at = 1.3;
  cfg.text_terms = text_terms;
  MatrixD tau(1, 1);
  tau(0, 0) = cfg.temperature;

  Stage2Grad<double> g;
  stage2_loss<double>(trig, rec, text, fp, cfg, &g);
  const auto f = [&] {
    LossConfig c = cfg;
    c.temperature = tau(0, 0);
    return stage2_loss<double>(trig, rec, text, fp, c).total;
  };
  EXPECT_LT(relative_error(g.d_trigger_audio, numeric_grad(trig, f)), kTolerance);
  EXPECT_LT(relative_error(g.d_rec_audio, numeric_grad(rec, f)), kTolerance);
  MatrixD dtau(1, 1);
  dtau(0, 0) = g.d_tau;
  EXPECT_LT(relative_error(dtau, numeric_grad(tau, f)), kTolerance);
  if (!text_terms) {
    EXPECT_EQ(g.d_rec_text.norm(), 0.0);
    EXPECT_EQ(g.d_fusion.w1.norm(), 0.0);
    return;
  }
  EXPECT_LT(relative_error(g.d_rec_text, numeric_grad(text, f)), kTolerance);
  EXPECT_LT(relative_error(g.d_fusion.w1, numeric_grad(fp.w1, f)), kTolerance);
  EXPECT_LT(relative_error(g.d_fusion.b1, numeric_grad(fp.b1, f)), kTolerance);
  EXPECT_LT(relative_error(g.d_fusion.w2, numeric_grad(fp.w2, f)), kTolerance);
  EXPECT_LT(relative_error(g.d_fusion.b2, numeric_grad(fp.b2, f)), kTolerance);
}

INSTANTIATE_TEST_SUITE_P(TextModes, Stage2Gradients, ::testing::Values(true, false));

}  // namespace
}  // namespace htcl
