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

#include "htcl/config.hpp"

#include <set>

#include "htcl/error.hpp"

namespace htcl {

namespace {

/// Reads the members of one JSON object, tracking which keys were consumed
/// so leftovers can be reported.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    read(*it, out, path_ + "." + key);
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown configuration key " + path_ + "." + key);
    }
  }

 private:
  static void mismatch(const std::string& path, const char* want) {
    throw ConfigError("configuration key " + path + ": expected " + want);
  }
  static void read(const Json& v, int& out, const std::string& path) {
    if (!v.is_number_integer()) mismatch(path, "an integer");
    out = v.get<int>();
  }
  static void read(const Json& v, std::uint64_t& out, const std::string& path) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      mismatch(path, "a non-negative integer");
    }
    out = v.get<std::uint64_t>();
  }
  static void read(const Json& v, double& out, const std::string& path) {
    if (!v.is_number()) mismatch(path, "a number");
    out = v.get<double>();
  }
  static void read(const Json& v, float& out, const std::string& path) {
    if (!v.is_number()) mismatch(path, "a number");
    out = v.get<float>();
  }
  static void read(const Json& v, bool& out, const std::string& path) {
    if (!v.is_boolean()) mismatch(path, "a boolean");
    out = v.get<bool>();
  }
  static void read(const Json& v, std::string& out, const std::string& path) {
    if (!v.is_string()) mismatch(path, "a string");
    out = v.get<std::string>();
  }
  static void read(const Json& v, std::vector<int>& out, const std::string& path) {
    if (!v.is_array()) mismatch(path, "an array of integers");
    out.clear();
    for (const Json& e : v) {
      if (!e.is_number_integer()) mismatch(path, "an array of integers");
      out.push_back(e.get<int>());
    }
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Json to_json(const OptimizerConfig& c) {
  return {{"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}, {"weight_decay", c.weight_decay}};
}

void from_json(const Json& j, OptimizerConfig& c, const std::string& path) {
  ObjectReader r(j, path);
  r.get("beta1", c.beta1);
  r.get("beta2", c.beta2);
  r.get("eps", c.eps);
  r.get("weight_decay", c.weight_decay);
  r.finish();
}

Json to_json(const ProbeConfig& c) {
  return {{"classes", c.classes}, {"lr", c.lr}, {"steps", c.steps}, {"seed", c.seed},
          {"train_fraction", c.train_fraction}};
}

void from_json(const Json& j, ProbeConfig& c, const std::string& path) {
  ObjectReader r(j, path);
  r.get("classes", c.classes);
  r.get("lr", c.lr);
  r.get("steps", c.steps);
  r.get("seed", c.seed);
  r.get("train_fraction", c.train_fraction);
  r.finish();
}

Json to_json(const RankerConfig& c) { return {{"lr", c.lr}, {"steps", c.steps}, {"l2", c.l2}}; }

void from_json(const Json& j, RankerConfig& c, const std::string& path) {
  ObjectReader r(j, path);
  r.get("lr", c.lr);
  r.get("steps", c.steps);
  r.get("l2", c.l2);
  r.finish();
}

}  // namespace

Json to_json(const GeneratorConfig& c) {
  return {{"num_songs", c.num_songs},
          {"genres", c.genres},
          {"languages", c.languages},
          {"style_dim", c.style_dim},
          {"artists_per_genre_language", c.artists_per_genre_language},
          {"genre_spread", c.genre_spread},
          {"artist_spread", c.artist_spread},
          {"song_spread", c.song_spread},
          {"sample_rate", c.sample_rate},
          {"duration_s", c.duration_s},
          {"sinusoids_per_genre", c.sinusoids_per_genre},
          {"tone_pool", c.tone_pool},
          {"language_partials", c.language_partials},
          {"noise_std", c.noise_std},
          {"transpose_semitones", c.transpose_semitones},
          {"words_per_language", c.words_per_language},
          {"words_per_genre", c.words_per_genre},
          {"title_tokens_min", c.title_tokens_min},
          {"title_tokens_max", c.title_tokens_max},
          {"lyrics_tokens_min", c.lyrics_tokens_min},
          {"lyrics_tokens_max", c.lyrics_tokens_max},
          {"language_mix", c.language_mix},
          {"featured_artist_rate", c.featured_artist_rate},
          {"num_users", c.num_users},
          {"eps", c.eps},
          {"session_mix_rate", c.session_mix_rate},
          {"neighbor_count", c.neighbor_count},
          {"triplets_per_song", c.triplets_per_song},
          {"session_length", c.session_length},
          {"holdout_fraction", c.holdout_fraction},
          {"triggers_per_user", c.triggers_per_user},
          {"user_pool_size", c.user_pool_size},
          {"ranking_days", c.ranking_days},
          {"ranking_rows_per_day", c.ranking_rows_per_day},
          {"ranking_history", c.ranking_history},
          {"analysis_pairs_per_anchor", c.analysis_pairs_per_anchor},
          {"negative_same_genre_rate", c.negative_same_genre_rate},
          {"seed", c.seed}};
}

void from_json(const Json& j, GeneratorConfig& c, const std::string& path) {
  ObjectReader r(j, path);
  r.get("num_songs", c.num_songs);
  r.get("genres", c.genres);
  r.get("languages", c.languages);
  r.get("style_dim", c.style_dim);
  r.get("artists_per_genre_language", c.artists_per_genre_language);
  r.get("genre_spread", c.genre_spread);
  r.get("artist_spread", c.artist_spread);
  r.get("song_spread", c.song_spread);
  r.get("sample_rate", c.sample_rate);
  r.get("duration_s", c.duration_s);
  r.get("sinusoids_per_genre", c.sinusoids_per_genre);
  r.get("tone_pool", c.tone_pool);
  r.get("language_partials", c.language_partials);
  r.get("noise_std", c.noise_std);
  r.get("transpose_semitones", c.transpose_semitones);
  r.get("words_per_language", c.words_per_language);
  r.get("words_per_genre", c.words_per_genre);
  r.get("title_tokens_min", c.title_tokens_min);
  r.get("title_tokens_max", c.title_tokens_max);
  r.get("lyrics_tokens_min", c.lyrics_tokens_min);
  r.get("lyrics_tokens_max", c.lyrics_tokens_max);
  r.get("language_mix", c.language_mix);
  r.get("featured_artist_rate", c.featured_artist_rate);
  r.get("num_users", c.num_users);
  r.get("eps", c.eps);
  r.get("session_mix_rate", c.session_mix_rate);
  r.get("neighbor_count", c.neighbor_count);
  r.get("triplets_per_song", c.triplets_per_song);
  r.get("session_length", c.session_length);
  r.get("holdout_fraction", c.holdout_fraction);
  r.get("triggers_per_user", c.triggers_per_user);
  r.get("user_pool_size", c.user_pool_size);
  r.get("ranking_days", c.ranking_days);
  r.get("ranking_rows_per_day", c.ranking_rows_per_day);
  r.get("ranking_history", c.ranking_history);
  r.get("analysis_pairs_per_anchor", c.analysis_pairs_per_anchor);
  r.get("negative_same_genre_rate", c.negative_same_genre_rate);
  r.get("seed", c.seed);
  r.finish();
}

Json to_json(const MelConfig& c) {
  return {{"sample_rate", c.sample_rate}, {"window_ms", c.window_ms}, {"hop_ms", c.hop_ms},
          {"n_mels", c.n_mels},           {"fmin", c.fmin},           {"fmax", c.fmax},
          {"log_floor", c.log_floor},     {"target_seconds", c.target_seconds}};
}

void from_json(const Json& j, MelConfig& c, const std::string& path) {
  ObjectReader r(j, path);
  r.get("sample_rate", c.sample_rate);
  r.get("window_ms", c.window_ms);
  r.get("hop_ms", c.hop_ms);
  r.get("n_mels", c.n_mels);
  r.get("fmin", c.fmin);
  r.get("fmax", c.fmax);
  r.get("log_floor", c.log_floor);
  r.get("target_seconds", c.target_seconds);
  r.finish();
}

Json to_json(const AudioEncoderConfig& c) {
  return {{"n_mels", c.n_mels},
          {"cnn_channels", c.cnn_channels},
          {"cnn_strides", c.cnn_strides},
          {"cnn_kernels", c.cnn_kernels},
          {"tf_layers", c.tf_layers},
          {"tf_heads", c.tf_heads},
          {"tf_hidden", c.tf_hidden},
          {"embed_dim", c.embed_dim},
          {"max_frames_after_cnn", c.max_frames_after_cnn},
          {"dropout", c.dropout}};
}

void from_json(const Json& j, AudioEncoderConfig& c, const std::string& path) {
  ObjectReader r(j, path);
  r.get("n_mels", c.n_mels);
  r.get("cnn_channels", c.cnn_channels);
  r.get("cnn_strides", c.cnn_strides);
  r.get("cnn_kernels", c.cnn_kernels);
  r.get("tf_layers", c.tf_layers);
  r.get("tf_heads", c.tf_heads);
  r.get("tf_hidden", c.tf_hidden);
  r.get("embed_dim", c.embed_dim);
  r.get("max_frames_after_cnn", c.max_frames_after_cnn);
  r.get("dropout", c.dropout);
  r.finish();
}

Json to_json(const TextEncoderConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"tf_layers", c.tf_layers}, {"tf_heads", c.tf_heads},
          {"tf_hidden", c.tf_hidden},   {"embed_dim", c.embed_dim}, {"max_text_len", c.max_text_len},
          {"dropout", c.dropout}};
}

void from_json(const Json& j, TextEncoderConfig& c, const std::string& path) {
  ObjectReader r(j, path);
  r.get("vocab_size", c.vocab_size);
  r.get("tf_layers", c.tf_layers);
  r.get("tf_heads", c.tf_heads);
  r.get("tf_hidden", c.tf_hidden);
  r.get("embed_dim", c.embed_dim);
  r.get("max_text_len", c.max_text_len);
  r.get("dropout", c.dropout);
  r.finish();
}

Json to_json(const ModelConfig& c) {
  return {{"audio_encoder", to_json(c.audio)},
          {"text_encoder", to_json(c.text)},
          {"fusion_hidden", c.fusion_hidden},
          {"learnable_temperature", c.learnable_temperature},
          {"initial_temperature", c.initial_temperature}};
}

void from_json(const Json& j, ModelConfig& c, const std::string& path) {
  ObjectReader r(j, path);
  if (const Json* a = r.child("audio_encoder")) from_json(*a, c.audio, r.path("audio_encoder"));
  if (const Json* t = r.child("text_encoder")) from_json(*t, c.text, r.path("text_encoder"));
  r.get("fusion_hidden", c.fusion_hidden);
  r.get("learnable_temperature", c.learnable_temperature);
  r.get("initial_temperature", c.initial_temperature);
  r.finish();
}

Json to_json(const LossConfig& c) {
  return {{"temperature", c.temperature}, {"learnable_temperature", c.learnable_temperature},
          {"w_aa", c.w_aa},               {"w_af", c.w_af},
          {"w_at", c.w_at},               {"text_terms", c.text_terms}};
}

void from_json(const Json& j, LossConfig& c, const std::string& path) {
  ObjectReader r(j, path);
  r.get("temperature", c.temperature);
  r.get("learnable_temperature", c.learnable_temperature);
  r.get("w_aa", c.w_aa);
  r.get("w_af", c.w_af);
  r.get("w_at", c.w_at);
  r.get("text_terms", c.text_terms);
  r.finish();
}

Json to_json(const TrainConfig& c) {
  return {{"stage", to_string(c.stage)},
          {"batch_size", c.batch_size},
          {"lr_main", c.lr_main},
          {"lr_text", c.lr_text},
          {"optimizer", to_json(c.optimizer)},
          {"steps", c.steps},
          {"warmup_steps", c.warmup_steps},
          {"grad_clip", c.grad_clip},
          {"seed", c.seed},
          {"deterministic", c.deterministic},
          {"ablation", to_string(c.ablation)},
          {"freeze_text", c.freeze_text}};
}

void from_json(const Json& j, TrainConfig& c, const std::string& path) {
  ObjectReader r(j, path);
  std::string stage = to_string(c.stage);
  std::string ablation = to_string(c.ablation);
  r.get("stage", stage);
  r.get("batch_size", c.batch_size);
  r.get("lr_main", c.lr_main);
  r.get("lr_text", c.lr_text);
  if (const Json* o = r.child("optimizer")) from_json(*o, c.optimizer, r.path("optimizer"));
  r.get("steps", c.steps);
  r.get("warmup_steps", c.warmup_steps);
  r.get("grad_clip", c.grad_clip);
  r.get("seed", c.seed);
  r.get("deterministic", c.deterministic);
  r.get("ablation", ablation);
  r.get("freeze_text", c.freeze_text);
  r.finish();
  c.stage = parse_stage(stage);
  c.ablation = parse_ablation(ablation);
}

Json to_json(const EvalConfig& c) {
  return {{"probe", to_json(c.probe)},
          {"k_retrieve", c.k_retrieve},
          {"cutoff", c.cutoff},
          {"ranker", to_json(c.ranker)},
          {"histogram_bins", c.histogram_bins},
          {"retrieval_batch", c.retrieval_batch}};
}

void from_json(const Json& j, EvalConfig& c, const std::string& path) {
  ObjectReader r(j, path);
  if (const Json* p = r.child("probe")) from_json(*p, c.probe, r.path("probe"));
  r.get("k_retrieve", c.k_retrieve);
  r.get("cutoff", c.cutoff);
  if (const Json* k = r.child("ranker")) from_json(*k, c.ranker, r.path("ranker"));
  r.get("histogram_bins", c.histogram_bins);
  r.get("retrieval_batch", c.retrieval_batch);
  r.finish();
}

Json to_json(const RunConfig& c) {
  return {{"data", to_json(c.data)},
          {"mel", to_json(c.mel)},
          {"audio_encoder", to_json(c.model.audio)},
          {"text_encoder", to_json(c.model.text)},
          {"fusion", {{"hidden", c.model.fusion_hidden}}},
          {"loss", to_json(c.loss)},
          {"pretrain", to_json(c.pretrain)},
          {"finetune", to_json(c.finetune)},
          {"eval", to_json(c.eval)}};
}

void from_json(const Json& j, RunConfig& c) {
  ObjectReader r(j, "config");
  if (const Json* v = r.child("data")) from_json(*v, c.data, "data");
  if (const Json* v = r.child("mel")) from_json(*v, c.mel, "mel");
  if (const Json* v = r.child("audio_encoder")) from_json(*v, c.model.audio, "audio_encoder");
  if (const Json* v = r.child("text_encoder")) from_json(*v, c.model.text, "text_encoder");
  if (const Json* v = r.child("fusion")) {
    ObjectReader f(*v, "fusion");
    f.get("hidden", c.model.fusion_hidden);
    f.finish();
  }
  if (const Json* v = r.child("loss")) from_json(*v, c.loss, "loss");
  if (const Json* v = r.child("pretrain")) from_json(*v, c.pretrain, "pretrain");
  if (const Json* v = r.child("finetune")) from_json(*v, c.finetune, "finetune");
  if (const Json* v = r.child("eval")) from_json(*v, c.eval, "eval");
  r.finish();
  c.model.learnable_temperature = c.loss.learnable_temperature;
  c.model.initial_temperature = c.loss.temperature;
}

void RunConfig::validate() const {
  data.validate();
  mel.validate();
  model.validate();
  loss.validate();
  pretrain.validate();
  finetune.validate();
  eval.probe.validate();
  if (pretrain.stage != Stage::kPretrain) throw ConfigError("pretrain.stage must be pretrain");
  if (finetune.stage != Stage::kFinetune) throw ConfigError("finetune.stage must be finetune");
  if (model.audio.n_mels != mel.n_mels) throw ConfigError("audio_encoder.n_mels must equal mel.n_mels");
  if (mel.sample_rate != data.sample_rate) throw ConfigError("mel.sample_rate must equal data.sample_rate");
  const int positions = conv_stack_length(model.audio, static_cast<int>(frame_count(mel.target_samples(), mel.hop_samples())));
  if (positions > model.audio.max_frames_after_cnn) {
    throw ConfigError("audio_encoder.max_frames_after_cnn is smaller than the " + std::to_string(positions) +
                      " positions produced by mel.target_seconds");
  }
  if (eval.k_retrieve < 1 || eval.cutoff < 1) throw ConfigError("eval.k_retrieve and eval.cutoff must be >= 1");
  if (eval.histogram_bins < 2) throw ConfigError("eval.histogram_bins must be >= 2");
  if (eval.retrieval_batch < 1) throw ConfigError("eval.retrieval_batch must be >= 1");
  if (eval.ranker.steps < 1 || !(eval.ranker.lr > 0.0)) throw ConfigError("eval.ranker needs steps >= 1 and lr > 0");
}

}  // namespace htcl
