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

#include "htcl/mel_frontend.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "htcl/binary_io.hpp"
#include "htcl/error.hpp"

namespace htcl {

int MelConfig::window_samples() const {
  return static_cast<int>(std::lround(window_ms * sample_rate / 1000.0));
}

int MelConfig::hop_samples() const {
  return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0));
}

std::int64_t MelConfig::target_samples() const {
  return static_cast<std::int64_t>(std::llround(target_seconds * sample_rate));
}

void MelConfig::validate() const {
  if (sample_rate <= 0) throw ConfigError("mel.sample_rate must be positive");
  if (!(window_ms > 0.0)) throw ConfigError("mel.window_ms must be positive");
  if (!(hop_ms > 0.0)) throw ConfigError("mel.hop_ms must be positive");
  if (hop_ms > window_ms) throw ConfigError("mel.hop_ms must not exceed mel.window_ms");
  if (n_mels < 1) throw ConfigError("mel.n_mels must be >= 1");
  if (fmin < 0.0) throw ConfigError("mel.fmin must be >= 0");
  if (effective_fmax() > sample_rate / 2.0) throw ConfigError("mel.fmax must be <= sample_rate/2");
  if (!(fmin < effective_fmax())) throw ConfigError("mel.fmin must be < mel.fmax");
  if (!(target_seconds > 0.0)) throw ConfigError("mel.target_seconds must be positive");
  if (window_samples() < 2 || hop_samples() < 1) {
    throw ConfigError("mel.window_ms/hop_ms too small for the sample rate");
  }
}

PaddedWaveform pad_or_truncate(std::span<const float> waveform, const MelConfig& cfg) {
  if (waveform.empty()) throw InputError("pad_or_truncate: empty waveform");
  for (float s : waveform) {
    if (!std::isfinite(s)) throw InputError("pad_or_truncate: non-finite sample");
  }
  const std::int64_t target = cfg.target_samples();
  PaddedWaveform out;
  out.samples.assign(static_cast<std::size_t>(target), 0.0f);
  const auto n = std::min<std::int64_t>(target, static_cast<std::int64_t>(waveform.size()));
  std::copy_n(waveform.begin(), n, out.samples.begin());
  out.valid_samples = n;
  out.valid_seconds = std::min(static_cast<double>(waveform.size()) / cfg.sample_rate,
                               cfg.target_seconds);
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Matrix mel_filterbank(const MelConfig& cfg, int n_fft) {
  const int bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.effective_fmax());
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(cfg.n_mels + 1));
  }
  Matrix fb = Matrix::Zero(cfg.n_mels, bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m) + 1];
    const double hi = edges[static_cast<std::size_t>(m) + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / n_fft;
      const double up = (f - lo) / (center - lo);
      const double down = (hi - f) / (hi - center);
      fb(m, k) = static_cast<float>(std::max(0.0, std::min(up, down)));
    }
  }
  return fb;
}

struct MelFrontend::Plan {
  float* in = nullptr;
  fftwf_complex* out = nullptr;
  fftwf_plan plan = nullptr;

  explicit Plan(int n_fft) {
    in = fftwf_alloc_real(static_cast<std::size_t>(n_fft));
    out = fftwf_alloc_complex(static_cast<std::size_t>(n_fft / 2 + 1));
    plan = fftwf_plan_dft_r2c_1d(n_fft, in, out, FFTW_ESTIMATE);
  }
  ~Plan() {
    fftwf_destroy_plan(plan);
    fftwf_free(out);
    fftwf_free(in);
  }
};

MelFrontend::MelFrontend(const MelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  n_fft_ = cfg_.window_samples();
  window_.resize(static_cast<std::size_t>(n_fft_));
  for (int n = 0; n < n_fft_; ++n) {
    // Periodic Hann window.
    window_[static_cast<std::size_t>(n)] = static_cast<float>(
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / static_cast<double>(n_fft_)));
  }
  filterbank_ = mel_filterbank(cfg_, n_fft_);
  plan_ = std::make_unique<Plan>(n_fft_);
}

MelFrontend::~MelFrontend() = default;

MelSpectrogram MelFrontend::compute(std::span<const float> waveform,
                                    std::int64_t valid_samples) const {
  const std::int64_t n = cfg_.target_samples();
  if (static_cast<std::int64_t>(waveform.size()) != n) {
    throw InputError("compute_mel: waveform must hold exactly " + std::to_string(n) + " samples");
  }
  const int hop = cfg_.hop_samples();
  const int half = n_fft_ / 2;
  const std::int64_t frames = frame_count(n, hop);
  const int bins = n_fft_ / 2 + 1;

  MelSpectrogram mel;
  mel.config = cfg_;
  mel.values.resize(frames, cfg_.n_mels);
  mel.num_valid_frames =
      static_cast<int>(std::min(frames, frame_count(std::clamp<std::int64_t>(valid_samples, 0, n), hop)));

  Eigen::VectorXf power(bins);
  for (std::int64_t f = 0; f < frames; ++f) {
    // Centered frame: sample index f*hop sits in the middle of the window,
    // samples outside the signal are zero.
    const std::int64_t start = f * hop - half;
    for (int i = 0; i < n_fft_; ++i) {
      const std::int64_t s = start + i;
      const float x = (s >= 0 && s < n) ? waveform[static_cast<std::size_t>(s)] : 0.0f;
      plan_->in[i] = x * window_[static_cast<std::size_t>(i)];
    }
    fftwf_execute(plan_->plan);
    for (int k = 0; k < bins; ++k) {
      power(k) = plan_->out[k][0] * plan_->out[k][0] + plan_->out[k][1] * plan_->out[k][1];
    }
    const Eigen::VectorXf energy = filterbank_ * power;
    for (int m = 0; m < cfg_.n_mels; ++m) {
      const float e = energy(m);
      const float v = e > 0.0f ? std::log(e) : cfg_.log_floor;
      mel.values(f, m) = std::isfinite(v) ? std::max(v, cfg_.log_floor) : cfg_.log_floor;
    }
  }
  return mel;
}

MelSpectrogram compute_mel(const PaddedWaveform& padded, const MelConfig& cfg) {
  return MelFrontend(cfg).compute(padded);
}

MelSpectrogram waveform_to_mel(std::span<const float> waveform, const MelConfig& cfg) {
  return compute_mel(pad_or_truncate(waveform, cfg), cfg);
}

void write_mel_cache(const std::filesystem::path& path, const MelSpectrogram& mel) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write mel cache: " + path.string());
  out.write("HMEL", 4);
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(mel.frames()));
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(mel.n_mels()));
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(mel.num_valid_frames));
  out.write(reinterpret_cast<const char*>(mel.values.data()),
            static_cast<std::streamsize>(mel.values.size() * sizeof(float)));
  if (!out) throw DataError("failed writing mel cache: " + path.string());
}

MelSpectrogram read_mel_cache(const std::filesystem::path& path, const MelConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open mel cache: " + path.string());
  const std::string what = "mel cache " + path.string();
  io::expect_magic(in, "HMEL", what);
  const auto frames = io::read_pod<std::uint32_t>(in, what);
  const auto n_mels = io::read_pod<std::uint32_t>(in, what);
  const auto valid = io::read_pod<std::uint32_t>(in, what);
  if (static_cast<int>(n_mels) != cfg.n_mels || valid > frames) {
    throw CorruptionError(what + ": header does not match configuration");
  }
  MelSpectrogram mel;
  mel.config = cfg;
  mel.num_valid_frames = static_cast<int>(valid);
  mel.values.resize(frames, n_mels);
  io::read_exact(in, reinterpret_cast<char*>(mel.values.data()),
                 static_cast<std::size_t>(mel.values.size()) * sizeof(float), what);
  return mel;
}

}  // namespace htcl
