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
#include <memory>
#include <span>
#include <vector>

#include "htcl/tensor.hpp"

namespace htcl {

struct MelConfig {
  int sample_rate = 16000;
  double window_ms = 128.0;
  double hop_ms = 96.0;
  int n_mels = 128;
  double fmin = 20.0;
  /// Upper band edge; <= 0 selects Nyquist.
  double fmax = 0.0;
  float log_floor = -10.0f;
  double target_seconds = 8.0;

  int window_samples() const;
  int hop_samples() const;
  std::int64_t target_samples() const;
  double effective_fmax() const { return fmax > 0.0 ? fmax : sample_rate / 2.0; }

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Log-mel energies, frames x n_mels.
struct MelSpectrogram {
  Matrix values;
  int num_valid_frames = 0;
  MelConfig config;

  int frames() const { return static_cast<int>(values.rows()); }
  int n_mels() const { return static_cast<int>(values.cols()); }
};

struct PaddedWaveform {
  std::vector<float> samples;
  double valid_seconds = 0.0;
  std::int64_t valid_samples = 0;
};

/// Keeps the first target_seconds of audio, zero-padding shorter inputs at
/// the end.
PaddedWaveform pad_or_truncate(std::span<const float> waveform, const MelConfig& cfg);

/// Frames produced by a centered short-time transform.
inline std::int64_t frame_count(std::int64_t num_samples, std::int64_t hop) {
  return num_samples / hop + 1;
}

/// HTK mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters, n_mels x (n_fft/2 + 1), unnormalized.
Matrix mel_filterbank(const MelConfig& cfg, int n_fft);

/// Reusable transform: owns the FFT plan, window and filterbank for one
/// configuration. Not safe to share across threads; the free function
/// `compute_mel` builds a fresh one per call.
class MelFrontend {
 public:
  explicit MelFrontend(const MelConfig& cfg);
  ~MelFrontend();
  MelFrontend(const MelFrontend&) = delete;
  MelFrontend& operator=(const MelFrontend&) = delete;

  /// `waveform` must hold exactly cfg.target_samples() samples; the first
  /// `valid_samples` of them are real audio.
  MelSpectrogram compute(std::span<const float> waveform, std::int64_t valid_samples) const;
  MelSpectrogram compute(const PaddedWaveform& padded) const {
    return compute(padded.samples, padded.valid_samples);
  }

  const MelConfig& config() const { return cfg_; }

 private:
  struct Plan;
  MelConfig cfg_;
  int n_fft_;
  std::vector<float> window_;
  Matrix filterbank_;
  std::unique_ptr<Plan> plan_;
};

MelSpectrogram compute_mel(const PaddedWaveform& padded, const MelConfig& cfg);

/// Pads/truncates and transforms in one call.
MelSpectrogram waveform_to_mel(std::span<const float> waveform, const MelConfig& cfg);

/// On-disk cache: "HMEL", u32 frames, u32 n_mels, u32 valid frames, then
/// little-endian float32 values in row-major order.
void write_mel_cache(const std::filesystem::path& path, const MelSpectrogram& mel);
MelSpectrogram read_mel_cache(const std::filesystem::path& path, const MelConfig& cfg);

}  // namespace htcl
