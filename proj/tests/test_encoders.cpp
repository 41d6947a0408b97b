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
#include <random>

#include "htcl/autograd.hpp"
#include "htcl/encoders.hpp"
#include "htcl/error.hpp"

namespace htcl {
namespace {

AudioEncoderConfig tiny_audio() {
  AudioEncoderConfig c;
  c.n_mels = 8;
  c.cnn_channels = 6;
  c.tf_layers = 1;
  c.tf_heads = 2;
  c.tf_hidden = 8;
  c.embed_dim = 4;
  c.max_frames_after_cnn = 16;
  return c;
}

TextEncoderConfig tiny_text() {
  TextEncoderConfig c;
  c.vocab_size = 12;
  c.tf_layers = 1;
  c.tf_heads = 2;
  c.tf_hidden = 8;
  c.embed_dim = 4;
  c.max_text_len = 16;
  return c;
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.audio = tiny_audio();
  m.text = tiny_text();
  return m;
}

MelSpectrogram random_mel(int frames, int n_mels, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<float> d(0.0f, 1.0f);
  MelSpectrogram m;
  m.values.resize(frames, n_mels);
  for (Eigen::Index i = 0; i < m.values.size(); ++i) m.values.data()[i] = d(gen);
  m.num_valid_frames = frames;
  return m;
}

TEST(ConvStack, PerLayerLengths) {
  EXPECT_EQ(conv_output_length(1251, 5, 2, 2), 626);
  EXPECT_EQ(conv_output_length(626, 3, 2, 1), 313);
  EXPECT_EQ(conv_output_length(313, 3, 2, 1), 157);
  EXPECT_EQ(conv_output_length(84, 5, 2, 2), 42);
  EXPECT_EQ(conv_output_length(42, 3, 2, 1), 21);
  EXPECT_EQ(conv_output_length(21, 3, 2, 1), 11);
}

TEST(ConvStack, DefaultStackMapsFullSongTo157) {
  const AudioEncoderConfig cfg;
  EXPECT_EQ(conv_stack_length(cfg, 1251), 157);
  EXPECT_EQ(conv_stack_length(cfg, 84), 11);
}

TEST(ConvStack, TooShortWithoutPadding) {
  EXPECT_THROW(conv_output_length(3, 5, 2, 0), InputTooShortError);
}

TEST(ParamCount, DefaultAudioEncoderHandCount) {
  const AudioEncoderConfig cfg;
  ParamStore store;
  Rng rng(1);
  init_audio_params(store, cfg, rng);
  const std::size_t conv0 = 5 * 128 * 512 + 512 + 2 * 512;
  const std::size_t conv12 = 2 * (3 * 512 * 512 + 512 + 2 * 512);
  const std::size_t input_proj = 512 * 128 + 128;
  const std::size_t pos = 160 * 128;
  const std::size_t block = 2 * 128 + (128 * 384 + 384) + (128 * 128 + 128) + 2 * 128 + (128 * 512 + 512) +
                            (512 * 128 + 128);
  const std::size_t expected = conv0 + conv12 + input_proj + pos + 2 * block + 2 * 128 + (128 * 64 + 64);
  EXPECT_EQ(store.scalar_count(), expected);
}

TEST(ParamCount, GroupsAreDisjoint) {
  const ParamStore p = init_params(tiny_model(), 3);
  EXPECT_EQ(p.scalar_count(ParamGroup::kAudio) + p.scalar_count(ParamGroup::kText) +
                p.scalar_count(ParamGroup::kFusion) + p.scalar_count(ParamGroup::kLoss),
            p.scalar_count());
  EXPECT_EQ(p.scalar_count(ParamGroup::kFusion), (8u * 8u + 8u) + (8u * 4u + 4u));
}

TEST(AudioEncode, UnitNormAndDeterministic) {
  ParamStore p = init_params(tiny_model(), 5);
  const MelSpectrogram mel = random_mel(40, 8, 1);
  const RowVector a = audio_encode(mel, p, tiny_audio());
  const RowVector b = audio_encode(mel, p, tiny_audio());
  EXPECT_NEAR(a.norm(), 1.0f, 1e-5);
  EXPECT_EQ(a, b);
}

TEST(AudioEncode, SeedsChangeParameters) {
  ParamStore p1 = init_params(tiny_model(), 5);
  ParamStore p2 = init_params(tiny_model(), 5);
  ParamStore p3 = init_params(tiny_model(), 6);
  const MelSpectrogram mel = random_mel(40, 8, 1);
  EXPECT_EQ(audio_encode(mel, p1, tiny_audio()), audio_encode(mel, p2, tiny_audio()));
  EXPECT_NE(audio_encode(mel, p1, tiny_audio()), audio_encode(mel, p3, tiny_audio()));
}

TEST(AudioEncode, PaddingFramesAreIgnored) {
  ParamStore p = init_params(tiny_model(), 5);
  const MelSpectrogram mel = random_mel(30, 8, 2);
  MelSpectrogram padded = random_mel(50, 8, 3);
  padded.values.topRows(30) = mel.values;
  padded.num_valid_frames = 30;
  EXPECT_EQ(audio_encode(mel, p, tiny_audio()), audio_encode(padded, p, tiny_audio()));
}

TEST(AudioEncode, RejectsWrongBandCountAndTooManyPositions) {
  ParamStore p = init_params(tiny_model(), 5);
  EXPECT_THROW(audio_encode(random_mel(20, 7, 1), p, tiny_audio()), InputError);
  EXPECT_THROW(audio_encode(random_mel(200, 8, 1), p, tiny_audio()), InputError);
}

TEST(AudioEncode, NonFiniteInputIsNumericError) {
  ParamStore p = init_params(tiny_model(), 5);
  MelSpectrogram mel = random_mel(20, 8, 1);
  mel.values(3, 3) = std::nanf("");
  EXPECT_THROW(audio_encode(mel, p, tiny_audio()), NumericError);
}

TEST(TextEncode, UnitNormAndPaddingIgnored) {
  ParamStore p = init_params(tiny_model(), 5);
  TokenSequence s{{2, 5, 7, 3}, 4};
  TokenSequence padded{{2, 5, 7, 3, 0, 0, 0}, 4};
  const RowVector a = text_encode(s, p, tiny_text());
  EXPECT_NEAR(a.norm(), 1.0f, 1e-5);
  EXPECT_EQ(a, text_encode(padded, p, tiny_text()));
}

TEST(TextEncode, RejectsOutOfRangeIds) {
  ParamStore p = init_params(tiny_model(), 5);
  EXPECT_THROW(text_encode(TokenSequence{{2, 40}, 2}, p, tiny_text()), InputError);
  EXPECT_THROW(text_encode(TokenSequence{{}, 0}, p, tiny_text()), InputError);
}

TEST(TextEmbedderAdapter, MatchesDirectEncode) {
  ParamStore p = init_params(tiny_model(), 5);
  const std::vector<std::string> corpus{"a b c d"};
  const Vocabulary v = build_vocab(corpus, 12);
  const BuiltinTextEmbedder e(v, p, tiny_text());
  EXPECT_EQ(e.dim(), 4);
  EXPECT_EQ(e.embed("a c"), text_encode(tokenize("a c", v, 16), p, tiny_text()));
}

/// Scalar probe loss r . f(params); returns its value and leaves gradients
/// in the store.
template <typename Forward>
double probe_loss(ParamStore& p, const RowVector& r, Forward fwd, bool backward) {
  ag::Graph g(backward);
  ag::Var e = fwd(g);
  const double value = g.value(e).row(0).dot(r);
  if (backward) {
    p.zero_grad();
    g.backward(e, Matrix(r));
  }
  return value;
}

template <typename Forward>
void check_param_gradients(ParamStore& p, Forward fwd) {
  const RowVector r = (RowVector(4) << 0.7f, -0.4f, 0.2f, 0.9f).finished();
  probe_loss(p, r, fwd, true);
  std::map<std::string, Matrix> analytic;
  for (auto& [name, param] : p) analytic[name] = param.grad;
  const float h = 2e-3f;
  int checked = 0;
  for (auto& [name, param] : p) {
    if (param.group == ParamGroup::kFusion) continue;
    for (Eigen::Index i = 0; i < param.value.size(); i += std::max<Eigen::Index>(1, param.value.size() / 5)) {
      float& x = param.value.data()[i];
      const float saved = x;
      x = saved + h;
      const double up = probe_loss(p, r, fwd, false);
      x = saved - h;
      const double down = probe_loss(p, r, fwd, false);
      x = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[name].data()[i];
      EXPECT_NEAR(a, numeric, 2e-3 + 5e-2 * std::abs(numeric)) << name << "[" << i << "]";
      ++checked;
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(EncoderGradients, AudioTowerMatchesFiniteDifferences) {
  ParamStore p = init_params(tiny_model(), 9);
  const MelSpectrogram mel = random_mel(24, 8, 4);
  const AudioEncoderConfig cfg = tiny_audio();
  check_param_gradients(p, [&](ag::Graph& g) { return audio_forward(g, p, cfg, mel); });
}

TEST(EncoderGradients, TextTowerMatchesFiniteDifferences) {
  ParamStore p = init_params(tiny_model(), 9);
  const TokenSequence s{{2, 5, 7, 3, 11, 4}, 6};
  const TextEncoderConfig cfg = tiny_text();
  check_param_gradients(p, [&](ag::Graph& g) { return text_forward(g, p, cfg, s); });
}

}  // namespace
}  // namespace htcl
