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

#include "htcl/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "htcl/autograd.hpp"
#include "htcl/binary_io.hpp"
#include "htcl/config.hpp"
#include "htcl/error.hpp"
#include "htcl/rng.hpp"

namespace htcl {

namespace {

constexpr std::uint64_t kBatchStream = 0xba7c4;
constexpr std::uint64_t kDropoutStream = 0xd20f;
constexpr const char* kMomentPrefixM = "optim.m/";
constexpr const char* kMomentPrefixV = "optim.v/";

ParamGroup group_for(const std::string& name) {
  if (name.starts_with("audio.")) return ParamGroup::kAudio;
  if (name.starts_with("text.")) return ParamGroup::kText;
  if (name.starts_with("fusion.")) return ParamGroup::kFusion;
  if (name.starts_with("loss.")) return ParamGroup::kLoss;
  throw CorruptionError("checkpoint: unexpected tensor name " + name);
}

std::map<ParamGroup, double> group_rates(const TrainConfig& cfg, int step) {
  const double w = warmup_factor(step, cfg.warmup_steps);
  const double text = cfg.freeze_text ? 0.0 : cfg.lr_text * w;
  return {{ParamGroup::kAudio, cfg.lr_main * w},
          {ParamGroup::kText, text},
          {ParamGroup::kFusion, cfg.lr_main * w},
          {ParamGroup::kLoss, cfg.lr_main * w}};
}

std::uint64_t effective_seed(const TrainConfig& cfg) {
  if (cfg.deterministic) return cfg.seed;
  return cfg.seed ^ (static_cast<std::uint64_t>(std::random_device{}()) << 32 | std::random_device{}());
}

float current_temperature(const TrainState& state) {
  if (state.params.contains("loss.log_tau")) {
    return std::exp(state.params.get("loss.log_tau").value(0, 0));
  }
  return static_cast<float>(state.loss.temperature);
}

/// Text embeddings of the batch; built on a non-recording tape when the text
/// tower is not being updated.
ag::Var text_batch(ag::Graph& g, const PairDataset& data, std::span<const int> ids, TrainState& state,
                   bool trainable, const ForwardOptions& opts) {
  std::vector<ag::Var> rows;
  if (trainable) {
    for (int id : ids) {
      rows.push_back(text_forward(g, state.params, state.model.text, data.tokens[static_cast<std::size_t>(id)], opts));
    }
    return g.stack_rows(rows);
  }
  Matrix frozen(static_cast<Eigen::Index>(ids.size()), state.model.text.embed_dim);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    frozen.row(static_cast<Eigen::Index>(i)) =
        text_encode(data.tokens[static_cast<std::size_t>(ids[i])], state.params, state.model.text);
  }
  return g.constant(std::move(frozen));
}

ag::Var audio_batch(ag::Graph& g, const PairDataset& data, std::span<const int> ids, TrainState& state,
                    const ForwardOptions& opts) {
  std::vector<ag::Var> rows;
  for (int id : ids) {
    rows.push_back(audio_forward(g, state.params, state.model.audio, data.mels[static_cast<std::size_t>(id)], opts));
  }
  return g.stack_rows(rows);
}

void check_ids(const PairDataset& data, std::span<const int> ids, const char* what) {
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= data.size()) {
      throw DataError(std::string(what) + ": song id " + std::to_string(id) + " not in dataset");
    }
  }
}

void record_step(TrainState& state, StepRecord rec, const StepCallback& on_step, TrainLog& log) {
  if (!std::isfinite(rec.total)) {
    throw NumericError("non-finite loss at step " + std::to_string(rec.step));
  }
  if (on_step) on_step(rec);
  state.history.steps.push_back(rec);
  log.steps.push_back(std::move(rec));
}

void apply_update(TrainState& state, const TrainConfig& cfg) {
  if (cfg.grad_clip > 0.0) clip_grad_norm(state.params, cfg.grad_clip);
  state.optimizer.step(state.params, group_rates(cfg, state.step));
  state.params.zero_grad();
  ++state.step;
}

}  // namespace

const char* to_string(Stage stage) { return stage == Stage::kPretrain ? "pretrain" : "finetune"; }

const char* to_string(Ablation ablation) {
  switch (ablation) {
    case Ablation::kNone:
      return "none";
    case Ablation::kCfPairs:
      return "cf_pairs";
    case Ablation::kNoText:
      return "no_text";
  }
  return "none";
}

Stage parse_stage(const std::string& s) {
  if (s == "pretrain") return Stage::kPretrain;
  if (s == "finetune") return Stage::kFinetune;
  throw ConfigError("unknown stage '" + s + "' (expected pretrain|finetune)");
}

Ablation parse_ablation(const std::string& s) {
  if (s == "none") return Ablation::kNone;
  if (s == "cf_pairs") return Ablation::kCfPairs;
  if (s == "no_text") return Ablation::kNoText;
  throw ConfigError("unknown ablation '" + s + "' (expected none|cf_pairs|no_text)");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr_main >= 0.0) || !(lr_text >= 0.0)) throw ConfigError("train.lr_main/lr_text must be >= 0");
  if (steps < 0) throw ConfigError("train.steps must be >= 0");
  if (warmup_steps < 0) throw ConfigError("train.warmup_steps must be >= 0");
  if (grad_clip < 0.0) throw ConfigError("train.grad_clip must be >= 0");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) || !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
    throw ConfigError("train.optimizer betas must be in [0,1)");
  }
  if (!(optimizer.eps > 0.0)) throw ConfigError("train.optimizer.eps must be > 0");
  if (optimizer.weight_decay < 0.0) throw ConfigError("train.optimizer.weight_decay must be >= 0");
}

TrainConfig TrainConfig::pretrain_defaults() {
  TrainConfig c;
  c.stage = Stage::kPretrain;
  c.batch_size = 64;
  c.lr_main = 1e-3;
  c.lr_text = 3e-4;
  c.steps = 1500;
  c.warmup_steps = 100;
  return c;
}

TrainConfig TrainConfig::finetune_defaults() {
  TrainConfig c;
  c.stage = Stage::kFinetune;
  c.batch_size = 32;
  c.lr_main = 1e-4;
  c.lr_text = 3e-5;
  c.steps = 600;
  c.warmup_steps = 50;
  return c;
}

double TrainLog::mean_total(std::size_t begin, std::size_t count) const {
  if (count == 0 || begin + count > steps.size()) throw InputError("mean_total: range out of bounds");
  double s = 0.0;
  for (std::size_t i = begin; i < begin + count; ++i) s += steps[i].total;
  return s / static_cast<double>(count);
}

void Adam::step(ParamStore& params, const std::map<ParamGroup, double>& lr) {
  ++updates_;
  const double t = static_cast<double>(updates_);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  const auto b1 = static_cast<float>(cfg_.beta1);
  const auto b2 = static_cast<float>(cfg_.beta2);
  for (auto& [name, p] : params) {
    const auto it = lr.find(p.group);
    const double rate = it == lr.end() ? 0.0 : it->second;
    if (rate == 0.0) continue;
    Matrix& m = m_[name];
    Matrix& v = v_[name];
    if (m.size() == 0) m = Matrix::Zero(p.value.rows(), p.value.cols());
    if (v.size() == 0) v = Matrix::Zero(p.value.rows(), p.value.cols());
    if (p.grad.size() == 0) p.zero_grad();
    m = b1 * m + (1.0f - b1) * p.grad;
    v = b2 * v + (1.0f - b2) * p.grad.cwiseAbs2();
    const auto step_size = static_cast<float>(rate / bc1);
    const auto denom_scale = static_cast<float>(1.0 / std::sqrt(bc2));
    const auto eps = static_cast<float>(cfg_.eps);
    if (cfg_.weight_decay > 0.0) p.value *= static_cast<float>(1.0 - rate * cfg_.weight_decay);
    p.value.array() -= step_size * m.array() / (v.array().sqrt() * denom_scale + eps);
  }
}

TrainState make_initial_state(const ModelConfig& model, const LossConfig& loss, const TrainConfig& train,
                              Vocabulary vocab, std::uint64_t seed) {
  TrainState state;
  state.model = model;
  state.model.learnable_temperature = loss.learnable_temperature;
  state.model.initial_temperature = loss.temperature;
  state.loss = loss;
  state.train = train;
  state.params = init_params(state.model, seed);
  state.optimizer = Adam(train.optimizer);
  state.vocab = std::move(vocab);
  return state;
}

double clip_grad_norm(ParamStore& params, double max_norm) {
  double sq = 0.0;
  for (auto& [name, p] : params) {
    if (p.grad.size() != 0) sq += static_cast<double>(p.grad.squaredNorm());
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const auto scale = static_cast<float>(max_norm / norm);
    for (auto& [name, p] : params) {
      if (p.grad.size() != 0) p.grad *= scale;
    }
  }
  return norm;
}

double warmup_factor(int step, int warmup_steps) {
  if (warmup_steps <= 0) return 1.0;
  return std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(warmup_steps));
}

std::vector<int> batch_indices(std::size_t dataset_size, int batch_size, int step, std::uint64_t seed) {
  if (dataset_size == 0) throw DataError("empty dataset");
  const auto batch = static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(batch_size), dataset_size));
  const std::size_t per_epoch = dataset_size / batch;
  const auto epoch = static_cast<std::uint64_t>(step) / per_epoch;
  const std::size_t offset = (static_cast<std::size_t>(step) % per_epoch) * batch;
  std::vector<int> order(dataset_size);
  for (std::size_t i = 0; i < dataset_size; ++i) order[i] = static_cast<int>(i);
  Rng rng(Rng::derive(seed, kBatchStream, epoch));
  rng.shuffle(order);
  return {order.begin() + static_cast<std::ptrdiff_t>(offset),
          order.begin() + static_cast<std::ptrdiff_t>(offset + batch)};
}

TrainLog pretrain(const PairDataset& data, std::span<const int> song_ids, TrainState& state,
                  const TrainConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  if (cfg.stage != Stage::kPretrain) throw ConfigError("pretrain: train.stage must be pretrain");
  if (song_ids.empty() || data.size() == 0) throw DataError("pretrain: empty dataset");
  if (data.mels.size() != data.tokens.size()) throw DataError("pretrain: mel/token count mismatch");
  check_ids(data, song_ids, "pretrain");
  state.train = cfg;
  const std::uint64_t seed = effective_seed(cfg);
  const bool text_trainable = !cfg.freeze_text && cfg.lr_text > 0.0;
  TrainLog log;
  const auto t0 = std::chrono::steady_clock::now();
  while (state.step < cfg.steps) {
    const std::vector<int> rows = batch_indices(song_ids.size(), cfg.batch_size, state.step, seed);
    std::vector<int> ids;
    for (int r : rows) ids.push_back(song_ids[static_cast<std::size_t>(r)]);

    Rng dropout_rng(Rng::derive(seed, kDropoutStream, static_cast<std::uint64_t>(state.step)));
    const ForwardOptions opts{true, &dropout_rng};
    ag::Graph g(true);
    const ag::Var audio = audio_batch(g, data, ids, state, opts);
    const ag::Var text = text_batch(g, data, ids, state, text_trainable, opts);

    const float tau = current_temperature(state);
    PairGrad<float> grad;
    const LossReport report = symmetric_loss<float>(g.value(audio), g.value(text), tau, &grad);
    Parameter* log_tau = state.params.contains("loss.log_tau") ? &state.params.get("loss.log_tau") : nullptr;
    Matrix loss_value(1, 1);
    loss_value(0, 0) = static_cast<float>(report.total);
    const ag::Var loss = g.custom({audio, text}, std::move(loss_value),
                                  [&, audio, text](ag::Graph& gg, const Matrix& d) {
                                    const float s = d(0, 0);
                                    gg.accumulate(audio, s * grad.d_query);
                                    gg.accumulate(text, s * grad.d_key);
                                    if (log_tau != nullptr) log_tau->grad(0, 0) += s * grad.d_tau * tau;
                                  });
    g.backward(loss);
    apply_update(state, cfg);

    StepRecord rec;
    rec.step = state.step;
    rec.total = report.total;
    rec.components = report.components;
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    record_step(state, std::move(rec), on_step, log);
  }
  return log;
}

void begin_finetune(TrainState& state, const TrainConfig& cfg, const LossConfig& loss) {
  cfg.validate();
  loss.validate();
  state.train = cfg;
  state.train.stage = Stage::kFinetune;
  const bool learnable = state.params.contains("loss.log_tau");
  state.loss = loss;
  state.loss.learnable_temperature = learnable;
  if (learnable) {
    // Carry the learned temperature into stage 2.
    state.loss.temperature = std::exp(state.params.get("loss.log_tau").value(0, 0));
  }
  state.optimizer = Adam(cfg.optimizer);
  state.step = 0;
  state.history = {};
}

TrainLog finetune(const PairDataset& data, std::span<const TripletSample> rows, TrainState& state,
                  const TrainConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  if (cfg.stage != Stage::kFinetune) throw ConfigError("finetune: train.stage must be finetune");
  if (rows.empty() || data.size() == 0) throw DataError("finetune: empty dataset");
  for (const TripletSample& t : rows) {
    if (t.trig_song_id < 0 || t.rec_song_id < 0 || static_cast<std::size_t>(t.trig_song_id) >= data.size() ||
        static_cast<std::size_t>(t.rec_song_id) >= data.size()) {
      throw DataError("finetune: triplet references unknown song");
    }
  }
  for (const char* name : {"fusion.fc1.weight", "fusion.fc2.weight"}) {
    if (!state.params.contains(name)) throw CompatibilityError("finetune: checkpoint lacks tensor " + std::string(name));
  }
  const auto dim = state.model.audio.embed_dim;
  if (state.params.get("fusion.fc1.weight").value.rows() != 2 * dim ||
      state.params.get("fusion.fc2.weight").value.cols() != dim) {
    throw CompatibilityError("finetune: tensor fusion.fc1.weight does not match embed_dim " + std::to_string(dim));
  }

  state.train = cfg;
  LossConfig loss_cfg = state.loss;
  loss_cfg.text_terms = cfg.ablation != Ablation::kNoText;
  state.loss.text_terms = loss_cfg.text_terms;
  const std::uint64_t seed = effective_seed(cfg);
  const bool text_trainable = loss_cfg.text_terms && !cfg.freeze_text && cfg.lr_text > 0.0;
  TrainLog log;
  const auto t0 = std::chrono::steady_clock::now();
  while (state.step < cfg.steps) {
    const std::vector<int> batch = batch_indices(rows.size(), cfg.batch_size, state.step, seed);
    std::vector<int> trig;
    std::vector<int> rec;
    for (int r : batch) {
      const TripletSample& t = rows[static_cast<std::size_t>(r)];
      if (loss_cfg.text_terms && !t.rec_text_present) {
        throw DataError("finetune: triplet (" + std::to_string(t.trig_song_id) + ", " +
                        std::to_string(t.rec_song_id) + ") has no rec text");
      }
      trig.push_back(t.trig_song_id);
      rec.push_back(t.rec_song_id);
    }

    Rng dropout_rng(Rng::derive(seed, kDropoutStream, static_cast<std::uint64_t>(state.step)));
    const ForwardOptions opts{true, &dropout_rng};
    ag::Graph g(true);
    const ag::Var trig_audio = audio_batch(g, data, trig, state, opts);
    const ag::Var rec_audio = audio_batch(g, data, rec, state, opts);
    const ag::Var rec_text =
        loss_cfg.text_terms ? text_batch(g, data, rec, state, text_trainable, opts) : g.constant(Matrix(0, dim));

    const float tau = current_temperature(state);
    loss_cfg.temperature = tau;
    const FusionParams<float> fp = fusion_params<float>(state.params);
    Stage2Grad<float> grad;
    const LossReport report =
        stage2_loss<float>(g.value(trig_audio), g.value(rec_audio), g.value(rec_text), fp, loss_cfg, &grad);
    Parameter* log_tau = state.params.contains("loss.log_tau") ? &state.params.get("loss.log_tau") : nullptr;
    Matrix loss_value(1, 1);
    loss_value(0, 0) = static_cast<float>(report.total);
    const bool text_terms = loss_cfg.text_terms;
    const ag::Var loss = g.custom(
        {trig_audio, rec_audio, rec_text}, std::move(loss_value),
        [&, trig_audio, rec_audio, rec_text, text_terms](ag::Graph& gg, const Matrix& d) {
          const float s = d(0, 0);
          gg.accumulate(trig_audio, s * grad.d_trigger_audio);
          gg.accumulate(rec_audio, s * grad.d_rec_audio);
          if (text_terms) {
            gg.accumulate(rec_text, s * grad.d_rec_text);
            state.params.get("fusion.fc1.weight").grad += s * grad.d_fusion.w1;
            state.params.get("fusion.fc1.bias").grad += s * grad.d_fusion.b1;
            state.params.get("fusion.fc2.weight").grad += s * grad.d_fusion.w2;
            state.params.get("fusion.fc2.bias").grad += s * grad.d_fusion.b2;
          }
          if (log_tau != nullptr) log_tau->grad(0, 0) += s * grad.d_tau * tau;
        });
    g.backward(loss);
    apply_update(state, cfg);

    StepRecord rec_log;
    rec_log.step = state.step;
    rec_log.total = report.total;
    rec_log.components = report.components;
    rec_log.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    record_step(state, std::move(rec_log), on_step, log);
  }
  return log;
}

std::vector<TripletSample> pairs_as_triplets(std::span<const std::pair<int, int>> pairs) {
  std::vector<TripletSample> out;
  out.reserve(pairs.size());
  for (const auto& [a, b] : pairs) out.push_back({a, b, true});
  return out;
}

Matrix embed_audio(const PairDataset& data, std::span<const int> song_ids, ParamStore& params,
                   const AudioEncoderConfig& cfg) {
  check_ids(data, song_ids, "embed_audio");
  Matrix out(static_cast<Eigen::Index>(song_ids.size()), cfg.embed_dim);
  for (std::size_t i = 0; i < song_ids.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = audio_encode(data.mels[static_cast<std::size_t>(song_ids[i])], params, cfg);
  }
  return out;
}

Matrix embed_text(const PairDataset& data, std::span<const int> song_ids, ParamStore& params,
                  const TextEncoderConfig& cfg) {
  check_ids(data, song_ids, "embed_text");
  Matrix out(static_cast<Eigen::Index>(song_ids.size()), cfg.embed_dim);
  for (std::size_t i = 0; i < song_ids.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = text_encode(data.tokens[static_cast<std::size_t>(song_ids[i])], params, cfg);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

struct TensorEntry {
  std::string name;
  const Matrix* data = nullptr;
};

Json history_to_json(const TrainLog& log) {
  Json arr = Json::array();
  for (const StepRecord& r : log.steps) {
    Json comps = Json::object();
    for (const auto& [k, v] : r.components) comps[k] = v;
    arr.push_back({{"step", r.step}, {"total", r.total}, {"components", comps}, {"wall_time_s", r.wall_time_s}});
  }
  return arr;
}

TrainLog history_from_json(const Json& arr) {
  TrainLog log;
  for (const Json& r : arr) {
    StepRecord rec;
    rec.step = r.at("step").get<int>();
    rec.total = r.at("total").get<double>();
    for (const auto& [k, v] : r.at("components").items()) rec.components[k] = v.get<double>();
    rec.wall_time_s = r.at("wall_time_s").get<double>();
    log.steps.push_back(std::move(rec));
  }
  return log;
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  Json blob;
  blob["model"] = to_json(state.model);
  blob["loss"] = to_json(state.loss);
  blob["train"] = to_json(state.train);
  blob["step"] = state.step;
  blob["optimizer_updates"] = state.optimizer.updates();
  blob["vocab"] = state.vocab.tokens();
  blob["history"] = history_to_json(state.history);
  const std::string blob_text = blob.dump();

  std::vector<TensorEntry> tensors;
  for (const auto& [name, p] : state.params) tensors.push_back({name, &p.value});
  for (const auto& [name, m] : state.optimizer.first_moments()) tensors.push_back({kMomentPrefixM + name, &m});
  for (const auto& [name, v] : state.optimizer.second_moments()) tensors.push_back({kMomentPrefixV + name, &v});

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint: " + path.string());
    out.write("HTCL", 4);
    io::write_pod<std::uint32_t>(out, kCheckpointVersion);
    io::write_pod<std::uint64_t>(out, blob_text.size());
    out.write(blob_text.data(), static_cast<std::streamsize>(blob_text.size()));
    io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    std::uint64_t offset = 0;
    for (const TensorEntry& t : tensors) {
      io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
      out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
      io::write_pod<std::uint8_t>(out, 0);  // f32
      io::write_pod<std::uint32_t>(out, 2);
      io::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(t.data->rows()));
      io::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(t.data->cols()));
      io::write_pod<std::uint64_t>(out, offset);
      offset += static_cast<std::uint64_t>(t.data->size()) * sizeof(float);
    }
    for (const TensorEntry& t : tensors) {
      out.write(reinterpret_cast<const char*>(t.data->data()),
                static_cast<std::streamsize>(t.data->size() * static_cast<Eigen::Index>(sizeof(float))));
    }
    if (!out) throw DataError("failed writing checkpoint: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  const auto file_size = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0);
  const std::string what = "checkpoint " + path.string();
  io::expect_magic(in, "HTCL", what);
  const auto version = io::read_pod<std::uint32_t>(in, what);
  if (version != kCheckpointVersion) {
    throw CompatibilityError(what + ": format version " + std::to_string(version) + ", expected " +
                             std::to_string(kCheckpointVersion));
  }
  const auto blob_len = io::read_pod<std::uint64_t>(in, what);
  if (blob_len > file_size) throw CorruptionError(what + ": config blob length exceeds file size");
  std::string blob_text(blob_len, '\0');
  io::read_exact(in, blob_text.data(), blob_len, what);
  Json blob;
  try {
    blob = Json::parse(blob_text);
  } catch (const Json::exception& e) {
    throw CorruptionError(what + ": malformed config blob: " + e.what());
  }

  TrainState state;
  try {
    from_json(blob.at("model"), state.model);
    from_json(blob.at("loss"), state.loss);
    from_json(blob.at("train"), state.train, "train");
    state.step = blob.at("step").get<int>();
    state.vocab = Vocabulary(blob.at("vocab").get<std::vector<std::string>>());
    state.history = history_from_json(blob.at("history"));
    state.optimizer = Adam(state.train.optimizer);
    state.optimizer.set_updates(blob.at("optimizer_updates").get<std::int64_t>());
  } catch (const Json::exception& e) {
    throw CorruptionError(what + ": incomplete config blob: " + e.what());
  }

  struct Dir {
    std::string name;
    std::uint64_t rows, cols, offset;
  };
  const auto count = io::read_pod<std::uint32_t>(in, what);
  if (count > file_size) throw CorruptionError(what + ": implausible tensor count");
  std::vector<Dir> dir;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = io::read_pod<std::uint32_t>(in, what);
    if (name_len > 4096) throw CorruptionError(what + ": implausible tensor name length");
    std::string name(name_len, '\0');
    io::read_exact(in, name.data(), name_len, what);
    if (io::read_pod<std::uint8_t>(in, what) != 0) throw CorruptionError(what + ": unsupported dtype for " + name);
    const auto rank = io::read_pod<std::uint32_t>(in, what);
    if (rank != 2) throw CorruptionError(what + ": tensor " + name + " has rank " + std::to_string(rank));
    const auto rows = io::read_pod<std::uint64_t>(in, what);
    const auto cols = io::read_pod<std::uint64_t>(in, what);
    const auto offset = io::read_pod<std::uint64_t>(in, what);
    dir.push_back({std::move(name), rows, cols, offset});
  }
  const auto payload_start = static_cast<std::uint64_t>(in.tellg());
  for (const Dir& d : dir) {
    const std::uint64_t bytes = d.rows * d.cols * sizeof(float);
    if (d.rows > file_size || d.cols > file_size || payload_start + d.offset + bytes > file_size) {
      throw CorruptionError(what + ": tensor " + d.name + " extends past end of file");
    }
    Matrix m(static_cast<Eigen::Index>(d.rows), static_cast<Eigen::Index>(d.cols));
    in.seekg(static_cast<std::streamoff>(payload_start + d.offset));
    io::read_exact(in, reinterpret_cast<char*>(m.data()), bytes, what);
    if (d.name.starts_with(kMomentPrefixM)) {
      state.optimizer.first_moments()[d.name.substr(std::string(kMomentPrefixM).size())] = std::move(m);
    } else if (d.name.starts_with(kMomentPrefixV)) {
      state.optimizer.second_moments()[d.name.substr(std::string(kMomentPrefixV).size())] = std::move(m);
    } else {
      if (state.params.contains(d.name)) throw CorruptionError(what + ": duplicate tensor " + d.name);
      Parameter& p = state.params.add(d.name, m.rows(), m.cols(), group_for(d.name));
      p.value = std::move(m);
    }
  }

  // Every tensor the stored config implies must be present with its shape.
  ModelConfig own = state.model;
  const ParamStore reference = init_params(own, 0);
  for (const auto& [name, ref] : reference) {
    if (!state.params.contains(name)) throw CorruptionError(what + ": missing tensor " + name);
    const Matrix& got = state.params.get(name).value;
    if (got.rows() != ref.value.rows() || got.cols() != ref.value.cols()) {
      throw CorruptionError(what + ": tensor " + name + " shape disagrees with stored config");
    }
  }
  if (state.params.size() != reference.size()) throw CorruptionError(what + ": unexpected extra tensors");

  if (expected != nullptr) {
    ModelConfig exp = *expected;
    exp.learnable_temperature = own.learnable_temperature;
    const ParamStore want = init_params(exp, 0);
    for (const auto& [name, ref] : want) {
      if (!state.params.contains(name)) throw CompatibilityError(what + ": tensor " + name + " absent from checkpoint");
      const Matrix& got = state.params.get(name).value;
      if (got.rows() != ref.value.rows() || got.cols() != ref.value.cols()) {
        throw CompatibilityError(what + ": tensor " + name + " has shape " + std::to_string(got.rows()) + "x" +
                                 std::to_string(got.cols()) + ", configuration expects " +
                                 std::to_string(ref.value.rows()) + "x" + std::to_string(ref.value.cols()));
      }
    }
  }
  for (auto& [name, p] : state.params) p.zero_grad();
  return state;
}

}  // namespace htcl
