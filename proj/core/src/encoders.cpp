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

#include "htcl/encoders.hpp"

#include <cmath>

#include "htcl/error.hpp"

namespace htcl {

namespace {

void add_linear(ParamStore& store, const std::string& name, int in, int out, ParamGroup group,
                Rng& rng) {
  Parameter& w = store.add(name + ".weight", in, out, group);
  init_uniform(w.value, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  store.add(name + ".bias", 1, out, group);
}

void add_norm(ParamStore& store, const std::string& name, int width, ParamGroup group) {
  store.add(name + ".gamma", 1, width, group).value.setOnes();
  store.add(name + ".beta", 1, width, group);
}

void add_blocks(ParamStore& store, const std::string& prefix, int layers, int hidden,
                ParamGroup group, Rng& rng) {
  for (int l = 0; l < layers; ++l) {
    const std::string b = prefix + ".block" + std::to_string(l);
    add_norm(store, b + ".ln1", hidden, group);
    add_linear(store, b + ".attn.qkv", hidden, 3 * hidden, group, rng);
    add_linear(store, b + ".attn.out", hidden, hidden, group, rng);
    add_norm(store, b + ".ln2", hidden, group);
    add_linear(store, b + ".ff.fc1", hidden, 4 * hidden, group, rng);
    add_linear(store, b + ".ff.fc2", 4 * hidden, hidden, group, rng);
  }
  add_norm(store, prefix + ".final_norm", hidden, group);
}

ag::Var linear(ag::Graph& g, ParamStore& p, const std::string& name, ag::Var x) {
  return g.linear(x, g.param(p.get(name + ".weight")), g.param(p.get(name + ".bias")));
}

ag::Var norm(ag::Graph& g, ParamStore& p, const std::string& name, ag::Var x) {
  return g.layer_norm(x, g.param(p.get(name + ".gamma")), g.param(p.get(name + ".beta")));
}

ag::Var maybe_dropout(ag::Graph& g, ag::Var x, float rate, const ForwardOptions& opts) {
  if (!opts.training || rate <= 0.0f || opts.dropout_rng == nullptr || !g.recording()) return x;
  return g.dropout(x, rate, *opts.dropout_rng);
}

/// Pre-norm transformer stack followed by the final LayerNorm.
ag::Var transformer(ag::Graph& g, ParamStore& p, const std::string& prefix, int layers, int heads,
                    float dropout, ag::Var x, const ForwardOptions& opts) {
  for (int l = 0; l < layers; ++l) {
    const std::string b = prefix + ".block" + std::to_string(l);
    ag::Var h = norm(g, p, b + ".ln1", x);
    h = g.self_attention(linear(g, p, b + ".attn.qkv", h), heads);
    h = maybe_dropout(g, linear(g, p, b + ".attn.out", h), dropout, opts);
    x = g.add(x, h);
    h = norm(g, p, b + ".ln2", x);
    h = g.gelu(linear(g, p, b + ".ff.fc1", h));
    h = maybe_dropout(g, linear(g, p, b + ".ff.fc2", h), dropout, opts);
    x = g.add(x, h);
  }
  return norm(g, p, prefix + ".final_norm", x);
}

/// Mean-pool, project to D, normalize.
ag::Var pool_and_project(ag::Graph& g, ParamStore& p, const std::string& prefix, ag::Var x) {
  return g.l2_normalize_rows(linear(g, p, prefix + ".proj", g.mean_rows(x)));
}

}  // namespace

void AudioEncoderConfig::validate() const {
  if (n_mels < 1) throw ConfigError("audio_encoder.n_mels must be >= 1");
  if (cnn_channels < 1) throw ConfigError("audio_encoder.cnn_channels must be >= 1");
  if (cnn_strides.size() != cnn_kernels.size() || cnn_strides.empty()) {
    throw ConfigError("audio_encoder.cnn_strides and cnn_kernels must have the same nonzero length");
  }
  for (std::size_t i = 0; i < cnn_strides.size(); ++i) {
    if (cnn_strides[i] < 1 || cnn_kernels[i] < 1) {
      throw ConfigError("audio_encoder.cnn_strides/cnn_kernels entries must be >= 1");
    }
  }
  if (tf_layers < 0) throw ConfigError("audio_encoder.tf_layers must be >= 0");
  if (tf_heads < 1 || tf_hidden < 1 || tf_hidden % tf_heads != 0) {
    throw ConfigError("audio_encoder.tf_hidden must be divisible by audio_encoder.tf_heads");
  }
  if (embed_dim < 1) throw ConfigError("audio_encoder.embed_dim must be >= 1");
  if (max_frames_after_cnn < 1) throw ConfigError("audio_encoder.max_frames_after_cnn must be >= 1");
  if (dropout < 0.0f || dropout >= 1.0f) throw ConfigError("audio_encoder.dropout must be in [0,1)");
}

void TextEncoderConfig::validate() const {
  if (vocab_size < 3) throw ConfigError("text_encoder.vocab_size must be >= 3");
  if (tf_layers < 0) throw ConfigError("text_encoder.tf_layers must be >= 0");
  if (tf_heads < 1 || tf_hidden < 1 || tf_hidden % tf_heads != 0) {
    throw ConfigError("text_encoder.tf_hidden must be divisible by text_encoder.tf_heads");
  }
  if (embed_dim < 1) throw ConfigError("text_encoder.embed_dim must be >= 1");
  if (max_text_len < 1) throw ConfigError("text_encoder.max_text_len must be >= 1");
  if (dropout < 0.0f || dropout >= 1.0f) throw ConfigError("text_encoder.dropout must be in [0,1)");
}

void ModelConfig::validate() const {
  audio.validate();
  text.validate();
  if (audio.embed_dim != text.embed_dim) {
    throw ConfigError("audio_encoder.embed_dim must equal text_encoder.embed_dim");
  }
  if (!(initial_temperature > 0.0)) throw ConfigError("loss.temperature must be > 0");
}

int conv_output_length(int input_len, int kernel, int stride, int padding) {
  if (input_len < 1 || kernel < 1 || stride < 1 || padding < 0) {
    throw InputError("conv_output_length: arguments must be positive");
  }
  const int numer = input_len + 2 * padding - kernel;
  const int out = numer < 0 ? 0 : numer / stride + 1;
  if (out < 1) {
    throw InputTooShortError("input of length " + std::to_string(input_len) +
                             " is too short for kernel " + std::to_string(kernel));
  }
  return out;
}

int conv_stack_length(const AudioEncoderConfig& cfg, int frames) {
  int len = frames;
  for (std::size_t i = 0; i < cfg.cnn_kernels.size(); ++i) {
    len = conv_output_length(len, cfg.cnn_kernels[i], cfg.cnn_strides[i], cfg.cnn_kernels[i] / 2);
  }
  return len;
}

int min_audio_frames(const AudioEncoderConfig& cfg) {
  for (int frames = 1;; ++frames) {
    try {
      conv_stack_length(cfg, frames);
      return frames;
    } catch (const InputTooShortError&) {
    }
  }
}

void init_audio_params(ParamStore& store, const AudioEncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  int in_ch = cfg.n_mels;
  for (std::size_t i = 0; i < cfg.cnn_kernels.size(); ++i) {
    const std::string name = "audio.conv" + std::to_string(i);
    add_linear(store, name, cfg.cnn_kernels[i] * in_ch, cfg.cnn_channels, ParamGroup::kAudio, rng);
    add_norm(store, name + ".norm", cfg.cnn_channels, ParamGroup::kAudio);
    in_ch = cfg.cnn_channels;
  }
  add_linear(store, "audio.input_proj", in_ch, cfg.tf_hidden, ParamGroup::kAudio, rng);
  init_normal(store.add("audio.pos_embed", cfg.max_frames_after_cnn, cfg.tf_hidden, ParamGroup::kAudio).value,
              0.02, rng);
  add_blocks(store, "audio", cfg.tf_layers, cfg.tf_hidden, ParamGroup::kAudio, rng);
  add_linear(store, "audio.proj", cfg.tf_hidden, cfg.embed_dim, ParamGroup::kAudio, rng);
}

void init_text_params(ParamStore& store, const TextEncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  init_normal(store.add("text.token_embed", cfg.vocab_size, cfg.tf_hidden, ParamGroup::kText).value,
              0.02, rng);
  init_normal(store.add("text.pos_embed", cfg.max_text_len, cfg.tf_hidden, ParamGroup::kText).value,
              0.02, rng);
  add_blocks(store, "text", cfg.tf_layers, cfg.tf_hidden, ParamGroup::kText, rng);
  add_linear(store, "text.proj", cfg.tf_hidden, cfg.embed_dim, ParamGroup::kText, rng);
}

void init_fusion_params(ParamStore& store, int embed_dim, int hidden, Rng& rng) {
  add_linear(store, "fusion.fc1", 2 * embed_dim, hidden, ParamGroup::kFusion, rng);
  add_linear(store, "fusion.fc2", hidden, embed_dim, ParamGroup::kFusion, rng);
}

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore store;
  // Independent streams per tower so changing one config leaves the others intact.
  Rng audio_rng(Rng::derive(seed, 1));
  Rng text_rng(Rng::derive(seed, 2));
  Rng fusion_rng(Rng::derive(seed, 3));
  init_audio_params(store, cfg.audio, audio_rng);
  init_text_params(store, cfg.text, text_rng);
  init_fusion_params(store, cfg.audio.embed_dim, cfg.fusion_hidden_dim(), fusion_rng);
  if (cfg.learnable_temperature) {
    store.add("loss.log_tau", 1, 1, ParamGroup::kLoss).value(0, 0) =
        static_cast<float>(std::log(cfg.initial_temperature));
  }
  return store;
}

ag::Var audio_forward(ag::Graph& g, ParamStore& params, const AudioEncoderConfig& cfg,
                      const MelSpectrogram& mel, ForwardOptions opts) {
  if (mel.n_mels() != cfg.n_mels) {
    throw InputError("audio_encode: mel has " + std::to_string(mel.n_mels()) +
                     " bands, encoder expects " + std::to_string(cfg.n_mels));
  }
  if (mel.num_valid_frames < 1 || mel.num_valid_frames > mel.frames()) {
    throw InputError("audio_encode: invalid num_valid_frames");
  }
  const auto valid = mel.values.topRows(mel.num_valid_frames);
  if (!valid.allFinite()) throw NumericError("audio_encode: non-finite mel input");
  const int positions = conv_stack_length(cfg, mel.num_valid_frames);
  if (positions > cfg.max_frames_after_cnn) {
    throw InputError("audio_encode: " + std::to_string(positions) +
                     " positions exceed max_frames_after_cnn=" + std::to_string(cfg.max_frames_after_cnn));
  }

  ag::Var x = g.constant(Matrix(valid));
  for (std::size_t i = 0; i < cfg.cnn_kernels.size(); ++i) {
    const std::string name = "audio.conv" + std::to_string(i);
    const int k = cfg.cnn_kernels[i];
    x = g.im2col(x, k, cfg.cnn_strides[i], k / 2);
    x = g.gelu(linear(g, params, name, x));
    x = norm(g, params, name + ".norm", x);
  }
  x = linear(g, params, "audio.input_proj", x);
  x = g.add(x, g.slice_rows(g.param(params.get("audio.pos_embed")), 0, positions));
  x = maybe_dropout(g, x, cfg.dropout, opts);
  x = transformer(g, params, "audio", cfg.tf_layers, cfg.tf_heads, cfg.dropout, x, opts);
  return pool_and_project(g, params, "audio", x);
}

ag::Var text_forward(ag::Graph& g, ParamStore& params, const TextEncoderConfig& cfg,
                     const TokenSequence& tokens, ForwardOptions opts) {
  if (tokens.length < 1 || tokens.length > static_cast<int>(tokens.token_ids.size())) {
    throw InputError("text_encode: token sequence must have 1 <= length <= ids");
  }
  if (tokens.length > cfg.max_text_len) throw InputError("text_encode: sequence exceeds max_text_len");
  const std::span<const int> ids(tokens.token_ids.data(), static_cast<std::size_t>(tokens.length));
  for (int id : ids) {
    if (id < 0 || id >= cfg.vocab_size) {
      throw InputError("text_encode: token id " + std::to_string(id) + " out of range for vocab_size " +
                       std::to_string(cfg.vocab_size));
    }
  }
  ag::Var x = g.gather_rows(g.param(params.get("text.token_embed")), ids);
  x = g.add(x, g.slice_rows(g.param(params.get("text.pos_embed")), 0, tokens.length));
  x = maybe_dropout(g, x, cfg.dropout, opts);
  x = transformer(g, params, "text", cfg.tf_layers, cfg.tf_heads, cfg.dropout, x, opts);
  return pool_and_project(g, params, "text", x);
}

RowVector audio_encode(const MelSpectrogram& mel, ParamStore& params, const AudioEncoderConfig& cfg) {
  ag::Graph g(false);
  return g.value(audio_forward(g, params, cfg, mel)).row(0);
}

RowVector text_encode(const TokenSequence& tokens, ParamStore& params, const TextEncoderConfig& cfg) {
  ag::Graph g(false);
  return g.value(text_forward(g, params, cfg, tokens)).row(0);
}

}  // namespace htcl
