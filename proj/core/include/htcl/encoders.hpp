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

// Audio and text towers mapping into the shared D-dimensional space.
//
// Audio: strided 1-D convolutions over time (GELU + LayerNorm after each),
// a linear lift to the transformer width, learned positions, pre-norm
// transformer blocks, masked mean-pool, projection and L2 normalization.
// Text: token + position embeddings, the same transformer stack, mean-pool
// over real tokens, projection and L2 normalization.
//
// Frames past `num_valid_frames` (and tokens past `length`) are dropped
// before the first layer. Zero-padded convolution over the valid prefix
// equals convolution over the full sequence with padded positions zeroed at
// every layer, so this is exactly the attention-masked computation restricted
// to valid positions.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "htcl/autograd.hpp"
#include "htcl/contrastive_core.hpp"
#include "htcl/mel_frontend.hpp"
#include "htcl/params.hpp"
#include "htcl/text_pipeline.hpp"

namespace htcl {

struct AudioEncoderConfig {
  int n_mels = 128;
  int cnn_channels = 512;
  std::vector<int> cnn_strides{2, 2, 2};
  std::vector<int> cnn_kernels{5, 3, 3};
  int tf_layers = 2;
  int tf_heads = 4;
  int tf_hidden = 128;
  int embed_dim = 64;
  /// Size of the learned position table (transformer positions after the CNN).
  int max_frames_after_cnn = 160;
  float dropout = 0.0f;

  void validate() const;
};

struct TextEncoderConfig {
  int vocab_size = 1024;
  int tf_layers = 2;
  int tf_heads = 4;
  int tf_hidden = 128;
  int embed_dim = 64;
  int max_text_len = 512;
  float dropout = 0.0f;

  void validate() const;
};

struct ModelConfig {
  AudioEncoderConfig audio;
  TextEncoderConfig text;
  /// Fusion hidden width; <= 0 selects 2D.
  int fusion_hidden = 0;
  bool learnable_temperature = false;
  double initial_temperature = 0.07;

  int fusion_hidden_dim() const { return fusion_hidden > 0 ? fusion_hidden : 2 * audio.embed_dim; }
  void validate() const;
};

/// floor((input_len + 2*padding - kernel)/stride) + 1; throws
/// InputTooShortError when the result would be < 1.
int conv_output_length(int input_len, int kernel, int stride, int padding);

/// Transformer positions produced by the CNN stack for `frames` mel frames
/// (half-kernel padding at every layer).
int conv_stack_length(const AudioEncoderConfig& cfg, int frames);

/// Smallest frame count that survives the CNN stack.
int min_audio_frames(const AudioEncoderConfig& cfg);

void init_audio_params(ParamStore& store, const AudioEncoderConfig& cfg, Rng& rng);
void init_text_params(ParamStore& store, const TextEncoderConfig& cfg, Rng& rng);
void init_fusion_params(ParamStore& store, int embed_dim, int hidden, Rng& rng);

/// All encoder, fusion (and optional temperature) parameters, registered
/// under stable names. Deterministic in (cfg, seed).
ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Per-call forward options. `dropout_rng` is only consulted when the
/// encoder config has dropout > 0 and the graph is recording.
struct ForwardOptions {
  bool training = false;
  Rng* dropout_rng = nullptr;
};

/// Builds the audio tower into `g`; returns a 1 x D unit row.
ag::Var audio_forward(ag::Graph& g, ParamStore& params, const AudioEncoderConfig& cfg,
                      const MelSpectrogram& mel, ForwardOptions opts = {});
ag::Var text_forward(ag::Graph& g, ParamStore& params, const TextEncoderConfig& cfg,
                     const TokenSequence& tokens, ForwardOptions opts = {});

/// Evaluation-mode encoders (no dropout, no tape).
RowVector audio_encode(const MelSpectrogram& mel, ParamStore& params, const AudioEncoderConfig& cfg);
RowVector text_encode(const TokenSequence& tokens, ParamStore& params, const TextEncoderConfig& cfg);

/// Fusion parameters copied out of the store.
template <typename T>
FusionParams<T> fusion_params(const ParamStore& store) {
  FusionParams<T> p;
  p.w1 = store.get("fusion.fc1.weight").value.cast<T>();
  p.b1 = store.get("fusion.fc1.bias").value.cast<T>();
  p.w2 = store.get("fusion.fc2.weight").value.cast<T>();
  p.b2 = store.get("fusion.fc2.bias").value.cast<T>();
  return p;
}

/// Slot for any text encoder producing D-dimensional unit embeddings, e.g. an
/// external pre-trained model wrapped by the caller.
class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual int dim() const = 0;
  virtual RowVector embed(std::string_view text) const = 0;
};

/// The built-in whitespace tokenizer plus text tower.
class BuiltinTextEmbedder final : public TextEmbedder {
 public:
  BuiltinTextEmbedder(const Vocabulary& vocab, ParamStore& params, const TextEncoderConfig& cfg)
      : vocab_(vocab), params_(params), cfg_(cfg) {}

  int dim() const override { return cfg_.embed_dim; }
  RowVector embed(std::string_view text) const override {
    return text_encode(tokenize(text, vocab_, cfg_.max_text_len), params_, cfg_);
  }

 private:
  const Vocabulary& vocab_;
  ParamStore& params_;
  TextEncoderConfig cfg_;
};

}  // namespace htcl
