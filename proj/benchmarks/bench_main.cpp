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

#include <benchmark/benchmark.h>

#include <random>

#include "htcl/contrastive_core.hpp"
#include "htcl/encoders.hpp"
#include "htcl/mel_frontend.hpp"
#include "htcl/synth_data.hpp"

namespace {

using namespace htcl;

Matrix unit_rows(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<float> d;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(gen);
  m.rowwise().normalize();
  return m;
}

void BM_SymmetricLossWithGrad(benchmark::State& state) {
  const int b = static_cast<int>(state.range(0));
  const Matrix a = unit_rows(b, 64, 1);
  const Matrix t = unit_rows(b, 64, 2);
  PairGrad<float> grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(symmetric_loss<float>(a, t, 0.07f, &grad));
  }
}
BENCHMARK(BM_SymmetricLossWithGrad)->Arg(32)->Arg(64)->Arg(256);

void BM_Stage2LossWithGrad(benchmark::State& state) {
  const int b = static_cast<int>(state.range(0));
  ModelConfig model;
  const ParamStore params = init_params(model, 3);
  const auto fp = fusion_params<float>(params);
  const Matrix trig = unit_rows(b, 64, 4);
  const Matrix rec = unit_rows(b, 64, 5);
  const Matrix text = unit_rows(b, 64, 6);
  Stage2Grad<float> grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(stage2_loss<float>(trig, rec, text, fp, LossConfig{}, &grad));
  }
}
BENCHMARK(BM_Stage2LossWithGrad)->Arg(32)->Arg(64);

void BM_MelEightSeconds(benchmark::State& state) {
  GeneratorConfig gen;
  gen.num_songs = 8;
  const Corpus corpus = generate_corpus(gen);
  const std::vector<float> wav = corpus.waveform(0);
  const MelConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(waveform_to_mel(wav, cfg));
}
BENCHMARK(BM_MelEightSeconds)->Unit(benchmark::kMillisecond);

void BM_AudioEncoderForward(benchmark::State& state) {
  ModelConfig model;
  model.audio.cnn_channels = static_cast<int>(state.range(0));
  ParamStore params = init_params(model, 7);
  MelSpectrogram mel;
  mel.values = unit_rows(84, 128, 8);
  mel.num_valid_frames = 84;
  for (auto _ : state) benchmark::DoNotOptimize(audio_encode(mel, params, model.audio));
}
BENCHMARK(BM_AudioEncoderForward)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_SynthesizeEightSeconds(benchmark::State& state) {
  GeneratorConfig gen;
  gen.num_songs = 8;
  const Corpus corpus = generate_corpus(gen);
  for (auto _ : state) benchmark::DoNotOptimize(corpus.waveform(1));
}
BENCHMARK(BM_SynthesizeEightSeconds)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
