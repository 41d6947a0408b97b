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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "htcl/contrastive_core.hpp"
#include "htcl/encoders.hpp"
#include "htcl/mel_frontend.hpp"
#include "htcl/params.hpp"
#include "htcl/synth_data.hpp"
#include "htcl/text_pipeline.hpp"

namespace htcl {

enum class Stage { kPretrain, kFinetune };
enum class Ablation { kNone, kCfPairs, kNoText };

const char* to_string(Stage stage);
const char* to_string(Ablation ablation);
Stage parse_stage(const std::string& s);
Ablation parse_ablation(const std::string& s);

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled weight decay.
  double weight_decay = 0.0;
};

struct TrainConfig {
  Stage stage = Stage::kPretrain;
  int batch_size = 64;
  double lr_main = 1e-3;
  double lr_text = 3e-5;
  OptimizerConfig optimizer;
  /// Total optimizer steps for the stage (absolute, so resumed runs stop at
  /// the same point).
  int steps = 1000;
  int warmup_steps = 100;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  bool deterministic = true;
  Ablation ablation = Ablation::kNone;
  bool freeze_text = false;

  void validate() const;
  static TrainConfig pretrain_defaults();
  static TrainConfig finetune_defaults();
};

/// Stage-1 inputs, indexed by song id.
struct PairDataset {
  std::vector<MelSpectrogram> mels;
  std::vector<TokenSequence> tokens;

  std::size_t size() const { return mels.size(); }
};

struct StepRecord {
  int step = 0;
  double total = 0.0;
  std::map<std::string, double> components;
  double wall_time_s = 0.0;
};

struct TrainLog {
  std::vector<StepRecord> steps;

  /// Mean total loss over records [begin, begin + count).
  double mean_total(std::size_t begin, std::size_t count) const;
};

/// Adam with decoupled weight decay and per-group learning rates.
class Adam {
 public:
  explicit Adam(OptimizerConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one update; groups whose learning rate is 0 are left untouched
  /// bit-for-bit (their moments are not advanced either).
  void step(ParamStore& params, const std::map<ParamGroup, double>& lr);

  const OptimizerConfig& config() const { return cfg_; }
  std::int64_t updates() const { return updates_; }
  void set_updates(std::int64_t n) { updates_ = n; }

  std::map<std::string, Matrix>& first_moments() { return m_; }
  std::map<std::string, Matrix>& second_moments() { return v_; }
  const std::map<std::string, Matrix>& first_moments() const { return m_; }
  const std::map<std::string, Matrix>& second_moments() const { return v_; }

 private:
  OptimizerConfig cfg_;
  std::int64_t updates_ = 0;
  std::map<std::string, Matrix> m_;
  std::map<std::string, Matrix> v_;
};

/// Everything needed to continue or evaluate a run.
struct TrainState {
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  ParamStore params;
  Adam optimizer;
  Vocabulary vocab;
  /// Steps completed in the current stage.
  int step = 0;
  TrainLog history;
};

/// Fresh state: initialized parameters, empty optimizer.
TrainState make_initial_state(const ModelConfig& model, const LossConfig& loss, const TrainConfig& train,
                              Vocabulary vocab, std::uint64_t seed);

/// Global L2 norm of all gradients; rescales them to `max_norm` when above.
double clip_grad_norm(ParamStore& params, double max_norm);

/// Learning-rate multiplier for linear warmup.
double warmup_factor(int step, int warmup_steps);

/// Row indices of the batch used at `step`: uniform sampling without
/// replacement within each epoch, epoch order a pure function of (seed, epoch).
std::vector<int> batch_indices(std::size_t dataset_size, int batch_size, int step, std::uint64_t seed);

using StepCallback = std::function<void(const StepRecord&)>;

/// Stage-1 contrastive pre-training over the songs in `song_ids`. Runs from
/// state.step up to cfg.steps and appends to state.history.
TrainLog pretrain(const PairDataset& data, std::span<const int> song_ids, TrainState& state,
                  const TrainConfig& cfg, const StepCallback& on_step = {});

/// Moves a stage-1 state into stage 2: keeps the parameters, resets the
/// optimizer, step counter and loss history, and records the new configs.
void begin_finetune(TrainState& state, const TrainConfig& cfg, const LossConfig& loss);

/// Stage-2 fine-tuning over (trigger, recommended) rows. In kNoText mode the
/// objective is the audio-audio term only. Rows for kCfPairs come from
/// co-occurrence pairs; the caller converts them with `pairs_as_triplets`.
TrainLog finetune(const PairDataset& data, std::span<const TripletSample> rows, TrainState& state,
                  const TrainConfig& cfg, const StepCallback& on_step = {});

std::vector<TripletSample> pairs_as_triplets(std::span<const std::pair<int, int>> pairs);

/// Audio embeddings (rows) for the given songs, evaluation mode.
Matrix embed_audio(const PairDataset& data, std::span<const int> song_ids, ParamStore& params,
                   const AudioEncoderConfig& cfg);
Matrix embed_text(const PairDataset& data, std::span<const int> song_ids, ParamStore& params,
                  const TextEncoderConfig& cfg);

// Checkpoint file: "HTCL", u32 format_version, u64 config blob length, JSON
// config blob, u32 tensor count, then per tensor {u32 name length, name,
// u8 dtype (0 = f32), u32 rank, u64 dims[rank], u64 byte offset} and a
// contiguous little-endian float32 payload. Optimizer moments are stored as
// tensors named "optim.m/<param>" and "optim.v/<param>".
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);

/// Throws CorruptionError for truncated or malformed files and missing
/// tensors, CompatibilityError for a version mismatch or when `expected`
/// is given and a tensor shape disagrees with it.
TrainState load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

}  // namespace htcl
