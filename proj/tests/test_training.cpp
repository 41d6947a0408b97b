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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "htcl/error.hpp"
#include "htcl/training.hpp"

namespace htcl {
namespace {

ModelConfig tiny_model() {
  ModelConfig m;
  m.audio.n_mels = 8;
  m.audio.cnn_channels = 8;
  m.audio.tf_layers = 1;
  m.audio.tf_heads = 2;
  m.audio.tf_hidden = 8;
  m.audio.embed_dim = 8;
  m.audio.max_frames_after_cnn = 8;
  m.text.vocab_size = 20;
  m.text.tf_layers = 1;
  m.text.tf_heads = 2;
  m.text.tf_hidden = 8;
  m.text.embed_dim = 8;
  m.text.max_text_len = 8;
  return m;
}

PairDataset toy_data(int n) {
  std::mt19937_64 gen(11);
  std::normal_distribution<float> d(0.0f, 1.0f);
  PairDataset data;
  for (int i = 0; i < n; ++i) {
    MelSpectrogram m;
    m.values.resize(20, 8);
    for (Eigen::Index k = 0; k < m.values.size(); ++k) m.values.data()[k] = d(gen);
    m.num_valid_frames = 20;
    data.mels.push_back(std::move(m));
    TokenSequence t;
    t.token_ids = {2, 3 + i % 17, 3 + (i * 7) % 17, 3 + (i * 3) % 17};
    t.length = 4;
    data.tokens.push_back(std::move(t));
  }
  return data;
}

std::vector<int> all_ids(int n) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;
  return ids;
}

TrainConfig toy_pretrain(int steps) {
  TrainConfig c = TrainConfig::pretrain_defaults();
  c.batch_size = 8;
  c.steps = steps;
  c.warmup_steps = 2;
  c.lr_main = 3e-3;
  c.lr_text = 3e-3;
  c.seed = 4;
  return c;
}

TrainState fresh_state(const TrainConfig& cfg) {
  return make_initial_state(tiny_model(), LossConfig{}, cfg, Vocabulary{}, 21);
}

std::vector<double> totals(const TrainLog& log) {
  std::vector<double> v;
  for (const StepRecord& r : log.steps) v.push_back(r.total);
  return v;
}

std::filesystem::path temp_file(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

TEST(Warmup, LinearRamp) {
  EXPECT_DOUBLE_EQ(warmup_factor(0, 4), 0.25);
  EXPECT_DOUBLE_EQ(warmup_factor(3, 4), 1.0);
  EXPECT_DOUBLE_EQ(warmup_factor(10, 4), 1.0);
  EXPECT_DOUBLE_EQ(warmup_factor(0, 0), 1.0);
}

TEST(BatchIndices, EpochIsAPermutationAndSeeded) {
  const auto a = batch_indices(10, 5, 0, 3);
  const auto b = batch_indices(10, 5, 1, 3);
  std::vector<int> both(a);
  both.insert(both.end(), b.begin(), b.end());
  std::sort(both.begin(), both.end());
  EXPECT_EQ(both, all_ids(10));
  EXPECT_EQ(a, batch_indices(10, 5, 0, 3));
  EXPECT_NE(a, batch_indices(10, 5, 0, 4));
}

TEST(ClipGradNorm, ScalesToMaxNorm) {
  ParamStore p;
  Parameter& w = p.add("w", 1, 2, ParamGroup::kAudio);
  w.grad = Matrix(1, 2);
  w.grad << 3.0f, 4.0f;
  EXPECT_NEAR(clip_grad_norm(p, 1.0), 5.0, 1e-6);
  EXPECT_NEAR(w.grad(0, 0), 0.6f, 1e-6);
  EXPECT_NEAR(w.grad(0, 1), 0.8f, 1e-6);
}

TEST(AdamTest, FirstStepMovesByLearningRate) {
  ParamStore p;
  Parameter& w = p.add("w", 1, 2, ParamGroup::kAudio);
  w.grad = Matrix(1, 2);
  w.grad << 0.5f, -2.0f;
  Adam adam;
  adam.step(p, {{ParamGroup::kAudio, 0.1}});
  // Bias-corrected first step is lr * g / (|g| + eps').
  EXPECT_NEAR(w.value(0, 0), -0.1f, 1e-6);
  EXPECT_NEAR(w.value(0, 1), 0.1f, 1e-6);
}

TEST(Pretrain, LossDecreasesOverFiftySteps) {
  const PairDataset data = toy_data(16);
  const auto ids = all_ids(16);
  const TrainConfig cfg = toy_pretrain(50);
  TrainState s = fresh_state(cfg);
  const TrainLog log = pretrain(data, ids, s, cfg);
  ASSERT_EQ(log.steps.size(), 50u);
  EXPECT_LT(log.mean_total(40, 10), log.mean_total(0, 10));
  EXPECT_EQ(s.step, 50);
}

TEST(Pretrain, DeterministicRerunsAreBitIdentical) {
  const PairDataset data = toy_data(16);
  const auto ids = all_ids(16);
  const TrainConfig cfg = toy_pretrain(20);
  TrainState a = fresh_state(cfg);
  TrainState b = fresh_state(cfg);
  EXPECT_EQ(totals(pretrain(data, ids, a, cfg)), totals(pretrain(data, ids, b, cfg)));
  EXPECT_EQ(a.params.get("audio.proj.weight").value, b.params.get("audio.proj.weight").value);
}

TEST(Pretrain, ZeroLearningRateLeavesParametersUnchanged) {
  const PairDataset data = toy_data(16);
  TrainConfig cfg = toy_pretrain(5);
  cfg.lr_main = 0.0;
  cfg.lr_text = 0.0;
  TrainState s = fresh_state(cfg);
  const ParamStore before = s.params;
  pretrain(data, all_ids(16), s, cfg);
  for (const auto& [name, p] : before) EXPECT_EQ(s.params.get(name).value, p.value) << name;
}

TEST(Pretrain, FrozenTextTowerIsBitIdentical) {
  const PairDataset data = toy_data(16);
  TrainConfig cfg = toy_pretrain(5);
  cfg.lr_text = 0.0;
  TrainState s = fresh_state(cfg);
  const ParamStore before = s.params;
  pretrain(data, all_ids(16), s, cfg);
  bool audio_moved = false;
  for (const auto& [name, p] : before) {
    if (p.group == ParamGroup::kText) EXPECT_EQ(s.params.get(name).value, p.value) << name;
    if (p.group == ParamGroup::kAudio) audio_moved |= s.params.get(name).value != p.value;
  }
  EXPECT_TRUE(audio_moved);
}

TEST(Pretrain, ResumeFromCheckpointReproducesTrace) {
  const PairDataset data = toy_data(16);
  const auto ids = all_ids(16);
  const TrainConfig full_cfg = toy_pretrain(20);
  TrainState full = fresh_state(full_cfg);
  const auto full_trace = totals(pretrain(data, ids, full, full_cfg));

  TrainState part = fresh_state(full_cfg);
  pretrain(data, ids, part, toy_pretrain(10));
  const auto path = temp_file("htcl_resume.htcl");
  save_checkpoint(part, path);
  TrainState resumed = load_checkpoint(path);
  const auto tail = totals(pretrain(data, ids, resumed, full_cfg));
  ASSERT_EQ(tail.size(), 10u);
  EXPECT_EQ(tail, std::vector<double>(full_trace.begin() + 10, full_trace.end()));
  std::filesystem::remove(path);
}

TEST(Pretrain, EmptyDatasetIsDataError) {
  const PairDataset data = toy_data(4);
  const TrainConfig cfg = toy_pretrain(1);
  TrainState s = fresh_state(cfg);
  EXPECT_THROW(pretrain(data, std::vector<int>{}, s, cfg), DataError);
}

TEST(Finetune, NoTextReportsOnlyAudioTerm) {
  const PairDataset data = toy_data(16);
  const std::vector<std::pair<int, int>> pairs{{0, 1}, {2, 3}, {4, 5}, {6, 7}, {8, 9}, {10, 11}, {12, 13}, {14, 15}};
  TrainConfig cfg = TrainConfig::finetune_defaults();
  cfg.batch_size = 4;
  cfg.steps = 3;
  cfg.ablation = Ablation::kNoText;
  TrainState s = fresh_state(toy_pretrain(1));
  begin_finetune(s, cfg, LossConfig{});
  const ParamStore before = s.params;
  const auto rows = pairs_as_triplets(pairs);
  const TrainLog log = finetune(data, rows, s, cfg);
  ASSERT_EQ(log.steps.size(), 3u);
  for (const StepRecord& r : log.steps) {
    EXPECT_EQ(r.components.size(), 1u);
    EXPECT_DOUBLE_EQ(r.components.begin()->second, r.total);
  }
  for (const auto& [name, p] : before) {
    if (p.group == ParamGroup::kText || p.group == ParamGroup::kFusion) EXPECT_EQ(s.params.get(name).value, p.value);
  }
}

TEST(Finetune, FullModeHasThreeTermsAndNeedsRecText) {
  const PairDataset data = toy_data(8);
  std::vector<TripletSample> rows{{0, 1, true}, {2, 3, true}, {4, 5, true}, {6, 7, true}};
  TrainConfig cfg = TrainConfig::finetune_defaults();
  cfg.batch_size = 4;
  cfg.steps = 1;
  TrainState s = fresh_state(toy_pretrain(1));
  begin_finetune(s, cfg, LossConfig{});
  const TrainLog log = finetune(data, rows, s, cfg);
  EXPECT_EQ(log.steps.at(0).components.size(), 3u);
  rows[1].rec_text_present = false;
  TrainState t = fresh_state(toy_pretrain(1));
  begin_finetune(t, cfg, LossConfig{});
  EXPECT_THROW(finetune(data, rows, t, cfg), DataError);
}

TEST(Checkpoint, RoundTripPreservesEmbeddingsBitExactly) {
  const PairDataset data = toy_data(8);
  const TrainConfig cfg = toy_pretrain(3);
  TrainState s = fresh_state(cfg);
  pretrain(data, all_ids(8), s, cfg);
  const auto path = temp_file("htcl_roundtrip.htcl");
  save_checkpoint(s, path);
  TrainState back = load_checkpoint(path);
  const std::vector<int> probe{5};
  EXPECT_EQ(embed_audio(data, probe, s.params, s.model.audio), embed_audio(data, probe, back.params, back.model.audio));
  EXPECT_EQ(embed_text(data, probe, s.params, s.model.text), embed_text(data, probe, back.params, back.model.text));
  EXPECT_EQ(back.step, 3);
  EXPECT_EQ(back.history.steps.size(), s.history.steps.size());
  EXPECT_EQ(back.optimizer.first_moments().size(), s.optimizer.first_moments().size());
  std::filesystem::remove(path);
}

TEST(Checkpoint, TruncatedFileIsCorruption) {
  TrainState s = fresh_state(toy_pretrain(1));
  const auto path = temp_file("htcl_truncated.htcl");
  save_checkpoint(s, path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 100);
  EXPECT_THROW(load_checkpoint(path), CorruptionError);
  std::filesystem::remove(path);
}

TEST(Checkpoint, MissingTensorIsCorruption) {
  TrainState s = fresh_state(toy_pretrain(1));
  s.params.erase("audio.proj.bias");
  const auto path = temp_file("htcl_missing.htcl");
  save_checkpoint(s, path);
  EXPECT_THROW(load_checkpoint(path), CorruptionError);
  std::filesystem::remove(path);
}

TEST(Checkpoint, ShapeMismatchNamesTensor) {
  TrainState s = fresh_state(toy_pretrain(1));
  const auto path = temp_file("htcl_compat.htcl");
  save_checkpoint(s, path);
  ModelConfig other = tiny_model();
  other.audio.embed_dim = 16;
  other.text.embed_dim = 16;
  try {
    load_checkpoint(path, &other);
    FAIL();
  } catch (const CompatibilityError& e) {
    EXPECT_NE(std::string(e.what()).find("audio.proj"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}

TEST(Checkpoint, UnknownVersionIsCompatibilityError) {
  TrainState s = fresh_state(toy_pretrain(1));
  const auto path = temp_file("htcl_version.htcl");
  save_checkpoint(s, path);
  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(4);
    const std::uint32_t v = 99;
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  EXPECT_THROW(load_checkpoint(path), CompatibilityError);
  std::filesystem::remove(path);
}

TEST(Checkpoint, BadMagicIsCorruption) {
  const auto path = temp_file("htcl_magic.htcl");
  std::ofstream(path) << "not a checkpoint at all";
  EXPECT_THROW(load_checkpoint(path), CorruptionError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace htcl
