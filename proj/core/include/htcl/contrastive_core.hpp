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

// Stage-1 symmetric InfoNCE, the fusion layer and the stage-2 loss family.
//
// Everything here is templated on the scalar type so the same code runs in
// float during training and in double for finite-difference checks. Each
// loss optionally writes its analytic gradient.

#pragma once

#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include "htcl/error.hpp"
#include "htcl/rng.hpp"
#include "htcl/tensor.hpp"

namespace htcl {

struct LossConfig {
  double temperature = 0.07;
  bool learnable_temperature = false;
  double w_aa = 1.0;
  double w_af = 1.0;
  double w_at = 1.0;
  /// When false only the audio-audio term is evaluated (text-free ablation).
  bool text_terms = true;

  void validate() const;
};

struct LossReport {
  double total = 0.0;
  std::map<std::string, double> components;
};

namespace loss_names {
inline constexpr const char* kAudioToText = "a->t";
inline constexpr const char* kTextToAudio = "t->a";
inline constexpr const char* kAudioAudio = "a,a";
inline constexpr const char* kAudioFused = "a,f";
inline constexpr const char* kAudioText = "a,t";
}  // namespace loss_names

namespace detail {

template <typename T>
void check_pair(const MatX<T>& a, const MatX<T>& b, T tau) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InputError("contrastive loss: shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
  if (a.rows() < 1) throw InputError("contrastive loss: empty batch");
  if (!(tau > T(0)) || !std::isfinite(static_cast<double>(tau))) {
    throw InputError("contrastive loss: temperature must be positive");
  }
  require_finite(a, "contrastive loss query");
  require_finite(b, "contrastive loss key");
}

template <typename T>
T gelu(T x) {
  constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
  return T(0.5) * x * (T(1) + std::tanh(c * (x + T(0.044715) * x * x * x)));
}

template <typename T>
T gelu_grad(T x) {
  constexpr T c = T(0.7978845608028654);
  const T t = std::tanh(c * (x + T(0.044715) * x * x * x));
  return T(0.5) * (T(1) + t) +
         T(0.5) * x * (T(1) - t * t) * c * (T(1) + T(3) * T(0.044715) * x * x);
}

}  // namespace detail

/// Gradient of a directional or symmetric loss with respect to its inputs.
template <typename T>
struct PairGrad {
  MatX<T> d_query;
  MatX<T> d_key;
  T d_tau = T(0);
};

/// -(1/B) sum_i log softmax_j(q_i . k_j / tau)[i], with max subtraction.
/// When `grad` is given, `scale * dL/d(input)` is accumulated into it.
template <typename T>
T info_nce_directional(const MatX<T>& query, const MatX<T>& key, T tau,
                       PairGrad<T>* grad = nullptr, T scale = T(1)) {
  detail::check_pair(query, key, tau);
  const Eigen::Index batch = query.rows();
  const MatX<T> logits = (query * key.transpose()) / tau;
  MatX<T> prob(batch, batch);
  T loss = T(0);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const T row_max = logits.row(i).maxCoeff();
    T denom = T(0);
    for (Eigen::Index j = 0; j < batch; ++j) {
      prob(i, j) = std::exp(logits(i, j) - row_max);
      denom += prob(i, j);
    }
    prob.row(i) /= denom;
    loss += -(logits(i, i) - row_max - std::log(denom));
  }
  loss /= static_cast<T>(batch);
  if (grad != nullptr) {
    // dL/dlogits = (P - I) / B
    MatX<T> g = prob;
    g.diagonal().array() -= T(1);
    g *= scale / static_cast<T>(batch);
    if (grad->d_query.size() == 0) grad->d_query = MatX<T>::Zero(batch, query.cols());
    if (grad->d_key.size() == 0) grad->d_key = MatX<T>::Zero(batch, key.cols());
    grad->d_query.noalias() += (g * key) / tau;
    grad->d_key.noalias() += (g.transpose() * query) / tau;
    grad->d_tau += -(g.array() * logits.array()).sum() / tau;
  }
  // Guard against -0 and tiny negative rounding for the B=1 / perfect cases.
  return loss < T(0) ? T(0) : loss;
}

/// L(a,b) = L(a->b) + L(b->a). Components are reported under the given
/// names; stage 1 uses "a->t" and "t->a".
template <typename T>
LossReport symmetric_loss(const MatX<T>& a, const MatX<T>& b, T tau, PairGrad<T>* grad = nullptr,
                          T scale = T(1), const char* forward_name = loss_names::kAudioToText,
                          const char* backward_name = loss_names::kTextToAudio) {
  PairGrad<T> forward_grad;
  PairGrad<T> backward_grad;
  const bool want = grad != nullptr;
  const T forward = info_nce_directional(a, b, tau, want ? &forward_grad : nullptr, scale);
  const T backward = info_nce_directional(b, a, tau, want ? &backward_grad : nullptr, scale);
  if (want) {
    if (grad->d_query.size() == 0) grad->d_query = MatX<T>::Zero(a.rows(), a.cols());
    if (grad->d_key.size() == 0) grad->d_key = MatX<T>::Zero(b.rows(), b.cols());
    grad->d_query += forward_grad.d_query + backward_grad.d_key;
    grad->d_key += forward_grad.d_key + backward_grad.d_query;
    grad->d_tau += forward_grad.d_tau + backward_grad.d_tau;
  }
  LossReport report;
  report.components[forward_name] = static_cast<double>(forward);
  report.components[backward_name] = static_cast<double>(backward);
  report.total = static_cast<double>(forward) + static_cast<double>(backward);
  return report;
}

/// Two affine layers 2D -> hidden -> D with a GELU between.
template <typename T>
struct FusionParams {
  MatX<T> w1;  // 2D x hidden
  MatX<T> b1;  // 1 x hidden
  MatX<T> w2;  // hidden x D
  MatX<T> b2;  // 1 x D

  Eigen::Index embed_dim() const { return w2.cols(); }
  Eigen::Index hidden_dim() const { return w1.cols(); }

  static FusionParams zeros(Eigen::Index embed_dim, Eigen::Index hidden_dim) {
    FusionParams p;
    p.w1 = MatX<T>::Zero(2 * embed_dim, hidden_dim);
    p.b1 = MatX<T>::Zero(1, hidden_dim);
    p.w2 = MatX<T>::Zero(hidden_dim, embed_dim);
    p.b2 = MatX<T>::Zero(1, embed_dim);
    return p;
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  static FusionParams init(Eigen::Index embed_dim, Eigen::Index hidden_dim, Rng& rng) {
    FusionParams p = zeros(embed_dim, hidden_dim);
    const double a1 = 1.0 / std::sqrt(static_cast<double>(2 * embed_dim));
    const double a2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    for (Eigen::Index i = 0; i < p.w1.size(); ++i) p.w1.data()[i] = static_cast<T>(rng.uniform(-a1, a1));
    for (Eigen::Index i = 0; i < p.w2.size(); ++i) p.w2.data()[i] = static_cast<T>(rng.uniform(-a2, a2));
    return p;
  }

  FusionParams& operator+=(const FusionParams& o) {
    w1 += o.w1;
    b1 += o.b1;
    w2 += o.w2;
    b2 += o.b2;
    return *this;
  }
};

/// Intermediate values of a batched fusion pass, kept for the backward pass.
template <typename T>
struct FusionCache {
  MatX<T> input;     // B x 2D
  MatX<T> pre_act;   // B x hidden
  MatX<T> act;       // B x hidden
  MatX<T> out;       // B x D, before normalization
  MatX<T> norms;     // B x 1
  MatX<T> fused;     // B x D, unit rows
};

/// Row-wise fusion of recommended-song audio and text embeddings.
template <typename T>
MatX<T> fusion_forward_batch(const MatX<T>& audio, const MatX<T>& text, const FusionParams<T>& fp,
                             FusionCache<T>* cache = nullptr) {
  const Eigen::Index dim = fp.embed_dim();
  if (audio.cols() != dim || text.cols() != dim || audio.rows() != text.rows() ||
      fp.w1.rows() != 2 * dim) {
    throw InputError("fusion: dimension mismatch (expected D=" + std::to_string(dim) + ")");
  }
  require_finite(audio, "fusion audio input");
  require_finite(text, "fusion text input");
  FusionCache<T> local;
  FusionCache<T>& c = cache != nullptr ? *cache : local;
  c.input.resize(audio.rows(), 2 * dim);
  c.input << audio, text;
  c.pre_act = c.input * fp.w1;
  c.pre_act.rowwise() += fp.b1.row(0);
  c.act = c.pre_act.unaryExpr([](T x) { return detail::gelu(x); });
  c.out = c.act * fp.w2;
  c.out.rowwise() += fp.b2.row(0);
  c.norms = c.out.rowwise().norm();
  for (Eigen::Index i = 0; i < c.norms.rows(); ++i) {
    if (!(c.norms(i, 0) > T(1e-12))) {
      throw NumericError("fusion: output vector has zero norm and cannot be normalized");
    }
  }
  c.fused = c.out.array().colwise() / c.norms.col(0).array();
  return c.fused;
}

/// Single-sample convenience wrapper.
template <typename T>
RowVecX<T> fusion_forward(const RowVecX<T>& audio, const RowVecX<T>& text,
                          const FusionParams<T>& fp) {
  const MatX<T> a = audio;
  const MatX<T> t = text;
  return fusion_forward_batch<T>(a, t, fp).row(0);
}

template <typename T>
struct FusionGrad {
  MatX<T> d_audio;
  MatX<T> d_text;
  FusionParams<T> d_params;
};

template <typename T>
FusionGrad<T> fusion_backward(const FusionCache<T>& c, const MatX<T>& d_fused,
                              const FusionParams<T>& fp) {
  const Eigen::Index dim = fp.embed_dim();
  // d out = (g - z (z.g)) / ||out||
  const MatX<T> dots = (c.fused.array() * d_fused.array()).rowwise().sum();
  MatX<T> d_out = d_fused - (c.fused.array().colwise() * dots.col(0).array()).matrix();
  d_out = (d_out.array().colwise() / c.norms.col(0).array()).matrix();
  FusionGrad<T> g;
  g.d_params.w2 = c.act.transpose() * d_out;
  g.d_params.b2 = d_out.colwise().sum();
  MatX<T> d_act = d_out * fp.w2.transpose();
  const MatX<T> d_pre =
      d_act.array() * c.pre_act.unaryExpr([](T x) { return detail::gelu_grad(x); }).array();
  g.d_params.w1 = c.input.transpose() * d_pre;
  g.d_params.b1 = d_pre.colwise().sum();
  const MatX<T> d_input = d_pre * fp.w1.transpose();
  g.d_audio = d_input.leftCols(dim);
  g.d_text = d_input.rightCols(dim);
  return g;
}

template <typename T>
struct Stage2Grad {
  MatX<T> d_trigger_audio;
  MatX<T> d_rec_audio;
  MatX<T> d_rec_text;
  FusionParams<T> d_fusion;
  T d_tau = T(0);
};

/// w_aa L(aT, aR) + w_af L(aT, f(aR, tR)) + w_at L(aR, tR), with in-batch
/// negatives for every term. With `text_terms` off only L(aT, aR) remains
/// and the fusion layer is not evaluated.
template <typename T>
LossReport stage2_loss(const MatX<T>& trigger_audio, const MatX<T>& rec_audio,
                       const MatX<T>& rec_text, const FusionParams<T>& fp, const LossConfig& cfg,
                       Stage2Grad<T>* grad = nullptr) {
  cfg.validate();
  const T tau = static_cast<T>(cfg.temperature);
  const bool want = grad != nullptr;
  if (rec_text.rows() != trigger_audio.rows() && cfg.text_terms) {
    throw InputError("stage2 loss: text batch size mismatch");
  }
  LossReport report;
  PairGrad<T> aa;
  const LossReport l_aa = symmetric_loss<T>(trigger_audio, rec_audio, tau, want ? &aa : nullptr,
                                            static_cast<T>(cfg.w_aa));
  report.components[loss_names::kAudioAudio] = l_aa.total;
  report.total = cfg.w_aa * l_aa.total;
  if (want) {
    grad->d_trigger_audio = aa.d_query;
    grad->d_rec_audio = aa.d_key;
    grad->d_rec_text = MatX<T>::Zero(rec_text.rows(), rec_text.cols());
    grad->d_fusion = FusionParams<T>::zeros(fp.embed_dim(), fp.hidden_dim());
    grad->d_tau = aa.d_tau;
  }
  if (!cfg.text_terms) return report;

  FusionCache<T> cache;
  const MatX<T> fused = fusion_forward_batch<T>(rec_audio, rec_text, fp, want ? &cache : nullptr);
  PairGrad<T> af;
  const LossReport l_af = symmetric_loss<T>(trigger_audio, fused, tau, want ? &af : nullptr,
                                            static_cast<T>(cfg.w_af));
  PairGrad<T> at;
  const LossReport l_at = symmetric_loss<T>(rec_audio, rec_text, tau, want ? &at : nullptr,
                                            static_cast<T>(cfg.w_at));
  report.components[loss_names::kAudioFused] = l_af.total;
  report.components[loss_names::kAudioText] = l_at.total;
  report.total += cfg.w_af * l_af.total + cfg.w_at * l_at.total;
  if (want) {
    const FusionGrad<T> fg = fusion_backward<T>(cache, af.d_key, fp);
    grad->d_trigger_audio += af.d_query;
    grad->d_rec_audio += fg.d_audio + at.d_query;
    grad->d_rec_text += fg.d_text + at.d_key;
    grad->d_fusion = fg.d_params;
    grad->d_tau += af.d_tau + at.d_tau;
  }
  return report;
}

inline void LossConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("loss.temperature must be > 0");
  }
  if (w_aa < 0.0 || w_af < 0.0 || w_at < 0.0) {
    throw ConfigError("loss weights must be >= 0");
  }
}

}  // namespace htcl
