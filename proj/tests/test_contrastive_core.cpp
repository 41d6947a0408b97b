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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "htcl/contrastive_core.hpp"
#include "htcl/error.hpp"
#include "test_support.hpp"

namespace htcl {
namespace {

using testing::naive_directional;
using testing::naive_symmetric;
using testing::random_unit_rows;

TEST(InfoNce, SingleRowIsZero) {
  std::mt19937_64 gen(1);
  const MatrixD q = random_unit_rows(1, 8, gen);
  const MatrixD k = random_unit_rows(1, 8, gen);
  EXPECT_EQ(info_nce_directional<double>(q, k, 0.07), 0.0);
}

TEST(InfoNce, IdentitySimilarityHandValue) {
  const MatrixD eye = MatrixD::Identity(2, 2);
  // softmax of (1, 0): -log(e / (e + 1)) = log(1 + e^-1)
  EXPECT_NEAR(info_nce_directional<double>(eye, eye, 1.0), 0.31326168751822286, 1e-12);
  EXPECT_NEAR(symmetric_loss<double>(eye, eye, 1.0).total, 2.0 * 0.31326168751822286, 1e-12);
}

TEST(InfoNce, MatchesBruteForceOracle) {
  std::mt19937_64 gen(11);
  std::uniform_int_distribution<int> b_dist(1, 16);
  std::uniform_int_distribution<int> d_dist(1, 32);
  std::uniform_real_distribution<double> tau_dist(0.03, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int b = b_dist(gen);
    const int d = d_dist(gen);
    const double tau = tau_dist(gen);
    const MatrixD q = random_unit_rows(b, d, gen);
    const MatrixD k = random_unit_rows(b, d, gen);
    EXPECT_NEAR(info_nce_directional<double>(q, k, tau), naive_directional(q, k, tau), 1e-6) << "trial " << trial;
    EXPECT_NEAR(symmetric_loss<double>(q, k, tau).total, naive_symmetric(q, k, tau), 1e-6) << "trial " << trial;
  }
}

TEST(InfoNce, LargeTemperatureApproachesUniform) {
  std::mt19937_64 gen(5);
  for (int b : {2, 7, 16}) {
    const MatrixD a = random_unit_rows(b, 12, gen);
    const MatrixD t = random_unit_rows(b, 12, gen);
    EXPECT_NEAR(symmetric_loss<double>(a, t, 1e6).total, 2.0 * std::log(static_cast<double>(b)), 1e-3);
  }
}

TEST(InfoNce, StableAtTinyTemperature) {
  std::mt19937_64 gen(6);
  const MatrixD a = random_unit_rows(8, 16, gen);
  const MatrixD t = random_unit_rows(8, 16, gen);
  const double v = symmetric_loss<double>(a, t, 1e-4).total;
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_GE(v, 0.0);
}

TEST(InfoNce, SymmetricInArguments) {
  std::mt19937_64 gen(7);
  const MatrixD a = random_unit_rows(9, 10, gen);
  const MatrixD t = random_unit_rows(9, 10, gen);
  EXPECT_NEAR(symmetric_loss<double>(a, t, 0.07).total, symmetric_loss<double>(t, a, 0.07).total, 1e-12);
}

TEST(InfoNce, RowPermutationLeavesLossUnchanged) {
  std::mt19937_64 gen(8);
  const int b = 10;
  const MatrixD a = random_unit_rows(b, 6, gen);
  const MatrixD t = random_unit_rows(b, 6, gen);
  std::vector<int> perm(b);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), gen);
  MatrixD ap(b, 6);
  MatrixD tp(b, 6);
  for (int i = 0; i < b; ++i) {
    ap.row(i) = a.row(perm[i]);
    tp.row(i) = t.row(perm[i]);
  }
  EXPECT_NEAR(symmetric_loss<double>(a, t, 0.1).total, symmetric_loss<double>(ap, tp, 0.1).total, 1e-6);
}

TEST(InfoNce, MovingQueryOntoItsKeyLowersRowLoss) {
  std::mt19937_64 gen(9);
  const MatrixD k = random_unit_rows(5, 8, gen);
  MatrixD on_key = k;
  MatrixD on_other = k;
  on_other.row(0) = k.row(3);
  EXPECT_LT(info_nce_directional<double>(on_key, k, 0.2), info_nce_directional<double>(on_other, k, 0.2));
}

TEST(InfoNce, RejectsBadInputs) {
  std::mt19937_64 gen(10);
  const MatrixD a = random_unit_rows(4, 8, gen);
  const MatrixD b = random_unit_rows(3, 8, gen);
  EXPECT_THROW(info_nce_directional<double>(a, b, 0.07), InputError);
  EXPECT_THROW(info_nce_directional<double>(a, a, 0.0), InputError);
  EXPECT_THROW(info_nce_directional<double>(a, a, -1.0), InputError);
  MatrixD bad = a;
  bad(1, 2) = std::nan("");
  EXPECT_THROW(info_nce_directional<double>(bad, a, 0.07), InputError);
}

TEST(Fusion, OutputIsUnitAndDeterministic) {
  std::mt19937_64 gen(12);
  Rng rng(3);
  const auto fp = FusionParams<double>::init(8, 16, rng);
  const MatrixD a = random_unit_rows(5, 8, gen);
  const MatrixD t = random_unit_rows(5, 8, gen);
  const MatrixD f1 = fusion_forward_batch<double>(a, t, fp);
  const MatrixD f2 = fusion_forward_batch<double>(a, t, fp);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(f1.row(i).norm(), 1.0, 1e-5);
  EXPECT_EQ(f1, f2);
  const RowVecX<double> single = fusion_forward<double>(a.row(2), t.row(2), fp);
  EXPECT_NEAR((single - f1.row(2)).norm(), 0.0, 1e-12);
}

TEST(Fusion, ZeroParametersSignalDegenerateNormalization) {
  std::mt19937_64 gen(13);
  const auto fp = FusionParams<double>::zeros(4, 8);
  const MatrixD a = random_unit_rows(2, 4, gen);
  EXPECT_THROW(fusion_forward_batch<double>(a, a, fp), NumericError);
}

TEST(Fusion, RejectsDimensionMismatch) {
  std::mt19937_64 gen(14);
  Rng rng(4);
  const auto fp = FusionParams<double>::init(8, 16, rng);
  const MatrixD a = random_unit_rows(2, 6, gen);
  EXPECT_THROW(fusion_forward_batch<double>(a, a, fp), InputError);
}

TEST(Stage2, SingleRowGivesZeroEverywhere) {
  std::mt19937_64 gen(15);
  Rng rng(5);
  const auto fp = FusionParams<double>::init(8, 16, rng);
  const MatrixD a = random_unit_rows(1, 8, gen);
  const MatrixD r = random_unit_rows(1, 8, gen);
  const MatrixD t = random_unit_rows(1, 8, gen);
  const LossReport rep = stage2_loss<double>(a, r, t, fp, LossConfig{});
  EXPECT_EQ(rep.total, 0.0);
  for (const auto& [name, v] : rep.components) EXPECT_EQ(v, 0.0) << name;
}

TEST(Stage2, TotalIsSumOfIndependentSymmetricLosses) {
  std::mt19937_64 gen(16);
  Rng rng(6);
  const int b = 8;
  const int d = 8;
  const auto fp = FusionParams<double>::init(d, 2 * d, rng);
  const MatrixD trig = random_unit_rows(b, d, gen);
  const MatrixD rec = random_unit_rows(b, d, gen);
  const MatrixD text = random_unit_rows(b, d, gen);
  LossConfig cfg;
  cfg.w_aa = 0.5;
  cfg.w_af = 2.0;
  cfg.w_at = 1.5;
  cfg.temperature = 0.1;

  // Reference fusion: concat -> affine -> tanh-GELU -> affine -> normalize.
  MatrixD fused(b, d);
  for (int i = 0; i < b; ++i) {
    Eigen::RowVectorXd in(2 * d);
    in << rec.row(i), text.row(i);
    Eigen::RowVectorXd h = in * fp.w1 + fp.b1;
    for (int j = 0; j < h.size(); ++j) {
      const double x = h(j);
      h(j) = 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
    }
    const Eigen::RowVectorXd o = h * fp.w2 + fp.b2;
    fused.row(i) = o / o.norm();
  }
  const double aa = naive_symmetric(trig, rec, 0.1);
  const double af = naive_symmetric(trig, fused, 0.1);
  const double at = naive_symmetric(rec, text, 0.1);
  const LossReport rep = stage2_loss<double>(trig, rec, text, fp, cfg);
  EXPECT_NEAR(rep.components.at("a,a"), aa, 1e-6);
  EXPECT_NEAR(rep.components.at("a,f"), af, 1e-6);
  EXPECT_NEAR(rep.components.at("a,t"), at, 1e-6);
  EXPECT_NEAR(rep.total, 0.5 * aa + 2.0 * af + 1.5 * at, 1e-6);
}

TEST(Stage2, TextFreeModeReportsOnlyAudioTerm) {
  std::mt19937_64 gen(17);
  Rng rng(7);
  const auto fp = FusionParams<double>::init(8, 16, rng);
  const MatrixD trig = random_unit_rows(4, 8, gen);
  const MatrixD rec = random_unit_rows(4, 8, gen);
  LossConfig cfg;
  cfg.text_terms = false;
  const LossReport rep = stage2_loss<double>(trig, rec, MatrixD(0, 8), fp, cfg);
  ASSERT_EQ(rep.components.size(), 1u);
  EXPECT_EQ(rep.components.begin()->first, "a,a");
  EXPECT_NEAR(rep.total, naive_symmetric(trig, rec, 0.07), 1e-9);
}

TEST(LossConfigTest, RejectsInvalidValues) {
  LossConfig c;
  c.temperature = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = LossConfig{};
  c.w_af = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace htcl
