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

#include "htcl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <unordered_set>

#include "htcl/error.hpp"
#include "htcl/rng.hpp"

namespace htcl {

EmbeddingStore::EmbeddingStore(Matrix rows) : rows_(std::move(rows)), present_(static_cast<std::size_t>(rows_.rows()), 1) {}

EmbeddingStore::EmbeddingStore(std::span<const int> ids, const Matrix& rows) {
  if (static_cast<Eigen::Index>(ids.size()) != rows.rows()) throw InputError("EmbeddingStore: id/row count mismatch");
  int max_id = -1;
  for (int id : ids) {
    if (id < 0) throw InputError("EmbeddingStore: negative id");
    max_id = std::max(max_id, id);
  }
  rows_ = Matrix::Zero(max_id + 1, rows.cols());
  present_.assign(static_cast<std::size_t>(max_id + 1), 0);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    rows_.row(ids[i]) = rows.row(static_cast<Eigen::Index>(i));
    present_[static_cast<std::size_t>(ids[i])] = 1;
  }
}

bool EmbeddingStore::contains(int id) const {
  return id >= 0 && static_cast<std::size_t>(id) < present_.size() && present_[static_cast<std::size_t>(id)] != 0;
}

Eigen::Index EmbeddingStore::checked(int id) const {
  if (!contains(id)) throw DataError("no embedding for song id " + std::to_string(id));
  return id;
}

std::vector<int> EmbeddingStore::ids() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < present_.size(); ++i) {
    if (present_[i] != 0) out.push_back(static_cast<int>(i));
  }
  return out;
}

EmbeddingStore EmbeddingStore::transformed(const Matrix& rotation) const {
  if (rotation.rows() != rows_.cols() || rotation.cols() != rows_.cols()) {
    throw InputError("EmbeddingStore::transformed: rotation must be D x D");
  }
  EmbeddingStore out;
  out.rows_ = rows_ * rotation;
  out.present_ = present_;
  return out;
}

void ProbeConfig::validate() const {
  if (classes == 1 || classes < 0) throw ConfigError("eval.probe.classes must be 0 (infer) or >= 2");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("eval.probe.train_fraction must be in (0,1)");
  if (steps < 1) throw ConfigError("eval.probe.steps must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("eval.probe.lr must be > 0");
}

namespace {

/// Full-batch Adam on a parameter block.
struct AdamBlock {
  MatrixD m, v;
  int t = 0;

  void step(MatrixD& w, const MatrixD& g, double lr) {
    if (m.size() == 0) {
      m = MatrixD::Zero(w.rows(), w.cols());
      v = MatrixD::Zero(w.rows(), w.cols());
    }
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(0.9, t);
    const double c2 = 1.0 - std::pow(0.999, t);
    w.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + 1e-8);
  }
};

MatrixD with_bias(const MatrixD& x) {
  MatrixD out(x.rows(), x.cols() + 1);
  out.leftCols(x.cols()) = x;
  out.col(x.cols()).setOnes();
  return out;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

double linear_probe(const Matrix& embeddings, std::span<const int> labels, const ProbeConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(embeddings.rows());
  if (labels.size() != n) throw InputError("linear_probe: label count does not match embeddings");
  if (n < 2) throw DataError("linear_probe: need at least two items");
  std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw DataError("linear_probe: single-class input");
  if (*distinct.begin() < 0) throw DataError("linear_probe: negative label");
  const int classes = cfg.classes > 0 ? cfg.classes : *distinct.rbegin() + 1;
  if (*distinct.rbegin() >= classes) throw DataError("linear_probe: label exceeds class count");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.seed);
  rng.shuffle(order);
  const auto n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(n))), 1, n - 1);

  const MatrixD x_all = with_bias(embeddings.cast<double>());
  const auto dim = x_all.cols();
  MatrixD x_train(static_cast<Eigen::Index>(n_train), dim);
  MatrixD y_train = MatrixD::Zero(static_cast<Eigen::Index>(n_train), classes);
  for (std::size_t i = 0; i < n_train; ++i) {
    x_train.row(static_cast<Eigen::Index>(i)) = x_all.row(order[i]);
    y_train(static_cast<Eigen::Index>(i), labels[static_cast<std::size_t>(order[i])]) = 1.0;
  }

  MatrixD w = MatrixD::Zero(dim, classes);
  AdamBlock opt;
  for (int s = 0; s < cfg.steps; ++s) {
    MatrixD logits = x_train * w;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      const double mx = logits.row(r).maxCoeff();
      logits.row(r) = (logits.row(r).array() - mx).exp().matrix();
      logits.row(r) /= logits.row(r).sum();
    }
    const MatrixD grad = x_train.transpose() * (logits - y_train) / static_cast<double>(n_train);
    opt.step(w, grad, cfg.lr);
  }

  std::size_t correct = 0;
  for (std::size_t i = n_train; i < n; ++i) {
    const Eigen::RowVectorXd scores = x_all.row(order[i]) * w;
    Eigen::Index best = 0;
    scores.maxCoeff(&best);
    if (static_cast<int>(best) == labels[static_cast<std::size_t>(order[i])]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n - n_train);
}

double hr_at_k(const MatchingTask& task, const EmbeddingStore& store) {
  if (task.users.empty()) throw DataError("hr_at_k: no users");
  if (task.k_retrieve < 1 || task.cutoff < 1) throw ConfigError("hr_at_k: k_retrieve and cutoff must be >= 1");
  Matrix cand(static_cast<Eigen::Index>(task.candidates.size()), store.dim());
  for (std::size_t i = 0; i < task.candidates.size(); ++i) {
    cand.row(static_cast<Eigen::Index>(i)) = store.row(task.candidates[i]).normalized();
  }
  std::size_t hits = 0;
  for (const MatchingUser& user : task.users) {
    store.row(user.target);
    // Best score per retrieved candidate across all triggers.
    std::map<int, float> pooled;
    for (int trig : user.triggers) {
      const RowVector q = store.row(trig).normalized();
      const Eigen::VectorXf sims = cand * q.transpose();
      std::vector<std::pair<float, int>> scored;
      scored.reserve(task.candidates.size());
      for (std::size_t i = 0; i < task.candidates.size(); ++i) {
        if (task.candidates[i] == trig) continue;
        scored.emplace_back(sims(static_cast<Eigen::Index>(i)), task.candidates[i]);
      }
      const auto k = std::min<std::size_t>(static_cast<std::size_t>(task.k_retrieve), scored.size());
      const auto better = [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      };
      std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), better);
      for (std::size_t i = 0; i < k; ++i) {
        auto [it, fresh] = pooled.emplace(scored[i].second, scored[i].first);
        if (!fresh) it->second = std::max(it->second, scored[i].first);
      }
    }
    std::vector<std::pair<float, int>> merged;
    merged.reserve(pooled.size());
    for (const auto& [id, score] : pooled) merged.emplace_back(score, id);
    std::sort(merged.begin(), merged.end(),
              [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
    if (merged.size() > static_cast<std::size_t>(task.cutoff)) merged.resize(static_cast<std::size_t>(task.cutoff));
    if (std::any_of(merged.begin(), merged.end(), [&](const auto& e) { return e.second == user.target; })) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(task.users.size());
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InputError("auc: score/label count mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) {
        pos_rank_sum += mid_rank;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("auc: labels are all one class");
  const double p = static_cast<double>(pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

namespace {

MatrixD ranking_features(std::span<const RankingRow> rows, const EmbeddingStore& store) {
  const int d = store.dim();
  MatrixD x(static_cast<Eigen::Index>(rows.size()), 2 * d + 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const RankingRow& r = rows[i];
    Eigen::RowVectorXd hist = Eigen::RowVectorXd::Zero(d);
    for (int h : r.history) hist += store.row(h).cast<double>();
    if (!r.history.empty()) hist /= static_cast<double>(r.history.size());
    const Eigen::RowVectorXd cand = store.row(r.candidate).cast<double>();
    const auto row = static_cast<Eigen::Index>(i);
    x.block(row, 0, 1, d) = hist;
    x.block(row, d, 1, d) = cand;
    x(row, 2 * d) = hist.dot(cand);
    x(row, 2 * d + 1) = 1.0;
  }
  return x;
}

double fit_and_score(const MatrixD& x_train, const Eigen::VectorXd& y_train, const MatrixD& x_test,
                     std::span<const int> y_test, const RankerConfig& cfg) {
  MatrixD w = MatrixD::Zero(x_train.cols(), 1);
  AdamBlock opt;
  const auto n = static_cast<double>(x_train.rows());
  for (int s = 0; s < cfg.steps; ++s) {
    Eigen::VectorXd p = x_train * w;
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = sigmoid(p(i));
    MatrixD grad = x_train.transpose() * (p - y_train) / n + cfg.l2 * w;
    opt.step(w, grad, cfg.lr);
  }
  const Eigen::VectorXd scores = x_test * w;
  std::vector<double> s(scores.data(), scores.data() + scores.size());
  return auc(s, y_test);
}

}  // namespace

RankingAuc ranking_auc(std::span<const RankingRow> rows, const EmbeddingStore& store, const RankerConfig& cfg) {
  if (rows.empty()) throw DataError("ranking_auc: empty dataset");
  int last_day = rows.front().day;
  for (const RankingRow& r : rows) last_day = std::max(last_day, r.day);
  std::vector<RankingRow> train;
  std::vector<RankingRow> test;
  for (const RankingRow& r : rows) (r.day < last_day ? train : test).push_back(r);
  if (train.empty()) throw DataError("ranking_auc: no rows before the final day");
  const MatrixD x_train = ranking_features(train, store);
  const MatrixD x_test = ranking_features(test, store);
  Eigen::VectorXd click(static_cast<Eigen::Index>(train.size()));
  Eigen::VectorXd favor(static_cast<Eigen::Index>(train.size()));
  for (std::size_t i = 0; i < train.size(); ++i) {
    click(static_cast<Eigen::Index>(i)) = train[i].click ? 1.0 : 0.0;
    favor(static_cast<Eigen::Index>(i)) = train[i].favor ? 1.0 : 0.0;
  }
  std::vector<int> test_click;
  std::vector<int> test_favor;
  for (const RankingRow& r : test) {
    test_click.push_back(r.click ? 1 : 0);
    test_favor.push_back(r.favor ? 1 : 0);
  }
  RankingAuc out;
  out.ctr_auc = fit_and_score(x_train, click, x_test, test_click, cfg);
  out.cvr_auc = fit_and_score(x_train, favor, x_test, test_favor, cfg);
  return out;
}

SeparationReport distance_distribution(std::span<const AnalysisPair> pairs, const EmbeddingStore& store, int bins) {
  if (bins < 2) throw ConfigError("distance_distribution: bins must be >= 2");
  std::vector<double> pos;
  std::vector<double> neg;
  for (const AnalysisPair& p : pairs) {
    const RowVector a = store.row(p.anchor).normalized();
    const RowVector b = store.row(p.other).normalized();
    (p.positive ? pos : neg).push_back(static_cast<double>(a.dot(b)));
  }
  if (pos.empty() || neg.empty()) throw DataError("distance_distribution: empty positive or negative pair list");

  SeparationReport rep;
  rep.positives = pos.size();
  rep.negatives = neg.size();
  const double width = 2.0 / bins;
  rep.positive_counts.assign(static_cast<std::size_t>(bins), 0);
  rep.negative_counts.assign(static_cast<std::size_t>(bins), 0);
  for (int b = 0; b < bins; ++b) rep.bin_centers.push_back(-1.0 + (b + 0.5) * width);
  const auto bin_of = [&](double s) {
    return static_cast<std::size_t>(std::clamp(static_cast<int>(std::floor((s + 1.0) / width)), 0, bins - 1));
  };
  for (double s : pos) ++rep.positive_counts[bin_of(s)];
  for (double s : neg) ++rep.negative_counts[bin_of(s)];
  rep.mean_positive = std::accumulate(pos.begin(), pos.end(), 0.0) / static_cast<double>(pos.size());
  rep.mean_negative = std::accumulate(neg.begin(), neg.end(), 0.0) / static_cast<double>(neg.size());
  rep.mean_gap = rep.mean_positive - rep.mean_negative;

  std::vector<double> scores = pos;
  scores.insert(scores.end(), neg.begin(), neg.end());
  std::vector<int> labels(pos.size(), 1);
  labels.resize(scores.size(), 0);
  rep.separation_auc = auc(scores, labels);
  return rep;
}

void write_histogram_csv(const std::filesystem::path& path, const SeparationReport& report, bool positive) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write histogram: " + path.string());
  const auto& counts = positive ? report.positive_counts : report.negative_counts;
  out << "bin_center,count\n";
  for (std::size_t i = 0; i < counts.size(); ++i) out << report.bin_centers[i] << ',' << counts[i] << '\n';
}

double retrieval_top1(const Matrix& audio, const Matrix& text, int batch) {
  if (audio.rows() != text.rows() || audio.cols() != text.cols()) throw InputError("retrieval_top1: shape mismatch");
  if (batch < 1) throw ConfigError("retrieval_top1: batch must be >= 1");
  const Eigen::Index n = audio.rows();
  if (n == 0) throw DataError("retrieval_top1: no rows");
  const Eigen::Index b = std::min<Eigen::Index>(batch, n);
  const Eigen::Index full = n / b;
  std::size_t correct = 0;
  for (Eigen::Index k = 0; k < full; ++k) {
    const Matrix sims = audio.middleRows(k * b, b) * text.middleRows(k * b, b).transpose();
    for (Eigen::Index i = 0; i < b; ++i) {
      Eigen::Index best = 0;
      sims.row(i).maxCoeff(&best);
      if (best == i) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(full * b);
}

}  // namespace htcl
