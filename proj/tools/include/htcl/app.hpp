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

// End-to-end workflows shared by the command-line tool and the acceptance
// suite: dataset assembly, the two training stages and the metric report.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "htcl/config.hpp"
#include "htcl/eval.hpp"
#include "htcl/synth_data.hpp"
#include "htcl/training.hpp"

namespace htcl::app {

/// Everything the training and evaluation stages read, indexed by song id.
struct Workspace {
  std::vector<int> genres;
  std::vector<int> languages;
  std::vector<MelSpectrogram> mels;
  std::vector<std::string> texts;
  PreferenceData prefs;

  std::size_t size() const { return mels.size(); }
};

/// Builds the workspace straight from an in-memory corpus.
Workspace workspace_from_corpus(const Corpus& corpus, PreferenceData prefs, const MelConfig& mel);

/// Reads a directory written by gen-data. When `cache_dir` is set, mel
/// spectrograms are read from / written to it, keyed by the mel settings and
/// the manifest's identity.
Workspace load_workspace(const std::filesystem::path& data_dir, const MelConfig& mel,
                         const std::optional<std::filesystem::path>& cache_dir = std::nullopt);

PairDataset tokenize_workspace(const Workspace& ws, const Vocabulary& vocab, int max_text_len);

/// Stage 1 from scratch over the training split; the vocabulary is built from
/// training-split texts.
TrainState run_pretrain(const Workspace& ws, const RunConfig& cfg, const StepCallback& on_step = {});

/// Stage 2 from a stage-1 state, with the rows the ablation calls for.
TrainState run_finetune(const Workspace& ws, const RunConfig& cfg, TrainState init, Ablation ablation,
                        const StepCallback& on_step = {});

struct MetricReport {
  double genre_acc = 0.0;
  double language_acc = 0.0;
  double hit_rate = 0.0;
  double ctr_auc = 0.0;
  double cvr_auc = 0.0;
  double retrieval_top1 = 0.0;
};

/// Audio embeddings of every song in the workspace.
EmbeddingStore audio_embeddings(const Workspace& ws, TrainState& state);

MetricReport evaluate(const Workspace& ws, TrainState& state, const EvalConfig& cfg);
double genre_probe(const EmbeddingStore& store, const Workspace& ws, const ProbeConfig& cfg);
double matching_hit_rate(const EmbeddingStore& store, const Workspace& ws, const EvalConfig& cfg);
/// Audio-to-text top-1 over the held-out songs in batches of `batch`.
double heldout_retrieval(const Workspace& ws, TrainState& state, int batch);

Json to_json(const MetricReport& r);
Json to_json(const SeparationReport& r);

/// Per-step loss log as TSV: step, total, one column per component, wall time.
void write_train_log(const std::filesystem::path& path, const TrainLog& log);

}  // namespace htcl::app
