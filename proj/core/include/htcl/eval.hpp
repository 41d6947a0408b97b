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

// Downstream evaluation on frozen embeddings: linear probe accuracy,
// matching hit rate, ranking AUC with a logistic ranker, and the
// anchor-positive / anchor-negative similarity analysis.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "htcl/synth_data.hpp"
#include "htcl/tensor.hpp"

namespace htcl {

/// Embedding per song id; rows of ids without an embedding are flagged.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  /// Row i belongs to song id i.
  explicit EmbeddingStore(Matrix rows);
  EmbeddingStore(std::span<const int> ids, const Matrix& rows);

  bool contains(int id) const;
  /// Throws DataError naming the id when it has no embedding.
  auto row(int id) const { return rows_.row(checked(id)); }
  int dim() const { return static_cast<int>(rows_.cols()); }
  const Matrix& matrix() const { return rows_; }
  /// Ids with an embedding, ascending.
  std::vector<int> ids() const;

  /// Applies `rotation` (D x D) to every embedding.
  EmbeddingStore transformed(const Matrix& rotation) const;

 private:
  Eigen::Index checked(int id) const;

  Matrix rows_;
  std::vector<char> present_;
};

struct ProbeConfig {
  /// 0 infers the class count from the labels.
  int classes = 0;
  double lr = 0.05;
  int steps = 300;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;

  void validate() const;
};

/// Trains one affine layer + softmax on the train split (full-batch Adam)
/// and returns top-1 accuracy on the test split. Embeddings are read only.
double linear_probe(const Matrix& embeddings, std::span<const int> labels, const ProbeConfig& cfg);

struct MatchingTask {
  std::vector<MatchingUser> users;
  std::vector<int> candidates;
  int k_retrieve = 10;
  int cutoff = 100;
};

/// Fraction of users whose target lands in the candidate set built from the
/// top-k cosine neighbours of each trigger (the trigger itself excluded),
/// truncated to `cutoff` by best score with ascending-id tie-break.
double hr_at_k(const MatchingTask& task, const EmbeddingStore& store);

/// Probability that a random positive outscores a random negative (ties
/// count one half), computed exactly from rank sums. Throws DataError when
/// either class is empty.
double auc(std::span<const double> scores, std::span<const int> labels);

struct RankerConfig {
  double lr = 0.05;
  int steps = 300;
  double l2 = 1e-4;
};

struct RankingAuc {
  double ctr_auc = 0.0;
  double cvr_auc = 0.0;
};

/// Logistic ranker over [mean(history) , candidate , history.candidate]
/// trained on every day before the last and scored on the last day,
/// separately for click and favour labels.
RankingAuc ranking_auc(std::span<const RankingRow> rows, const EmbeddingStore& store, const RankerConfig& cfg);

struct SeparationReport {
  std::vector<double> bin_centers;
  std::vector<long> positive_counts;
  std::vector<long> negative_counts;
  double mean_positive = 0.0;
  double mean_negative = 0.0;
  double mean_gap = 0.0;
  double separation_auc = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// Histograms cosine scores of anchor-positive and anchor-negative pairs on
/// [-1, 1] and measures how far the positive distribution sits to the right.
SeparationReport distance_distribution(std::span<const AnalysisPair> pairs, const EmbeddingStore& store,
                                       int bins);

/// Two-column "bin_center,count" CSV for one distribution.
void write_histogram_csv(const std::filesystem::path& path, const SeparationReport& report, bool positive);

/// Audio-to-text top-1 retrieval accuracy within consecutive batches of
/// `batch` rows (a trailing partial batch is dropped unless it is the only one).
double retrieval_top1(const Matrix& audio, const Matrix& text, int batch);

struct EvalConfig {
  ProbeConfig probe;
  int k_retrieve = 10;
  int cutoff = 100;
  RankerConfig ranker;
  int histogram_bins = 40;
  int retrieval_batch = 64;
};

}  // namespace htcl
