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

#include "htcl/app.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "htcl/error.hpp"

namespace htcl::app {

namespace {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::filesystem::path cache_folder(const std::filesystem::path& cache_dir, const std::filesystem::path& data_dir,
                                   const MelConfig& mel) {
  const auto manifest = data_dir / "manifest.tsv";
  std::uint64_t h = fnv1a(to_json(mel).dump());
  h = fnv1a(std::filesystem::absolute(data_dir).lexically_normal().string(), h);
  h = fnv1a(std::to_string(std::filesystem::file_size(manifest)), h);
  h = fnv1a(std::to_string(std::filesystem::last_write_time(manifest).time_since_epoch().count()), h);
  return cache_dir / ("mel-" + hex(h));
}

}  // namespace

Workspace workspace_from_corpus(const Corpus& corpus, PreferenceData prefs, const MelConfig& mel) {
  Workspace ws;
  MelFrontend frontend(mel);
  for (const SongSpec& s : corpus.songs()) {
    ws.genres.push_back(s.genre);
    ws.languages.push_back(s.language);
    const std::vector<float> wav = corpus.waveform(s.song_id);
    ws.mels.push_back(frontend.compute(pad_or_truncate(wav, mel)));
    ws.texts.push_back(serialize_metadata(corpus.texts()[static_cast<std::size_t>(s.song_id)]));
  }
  ws.prefs = std::move(prefs);
  return ws;
}

Workspace load_workspace(const std::filesystem::path& data_dir, const MelConfig& mel,
                         const std::optional<std::filesystem::path>& cache_dir) {
  mel.validate();
  const std::vector<ManifestRow> rows = read_manifest(data_dir);
  std::optional<std::filesystem::path> cache;
  if (cache_dir) {
    cache = cache_folder(*cache_dir, data_dir, mel);
    std::filesystem::create_directories(*cache);
  }
  Workspace ws;
  MelFrontend frontend(mel);
  for (const ManifestRow& r : rows) {
    ws.genres.push_back(r.genre);
    ws.languages.push_back(r.language);
    ws.texts.push_back(serialize_metadata(read_text_document(data_dir / r.text_path)));
    std::filesystem::path cached;
    if (cache) {
      char name[32];
      std::snprintf(name, sizeof(name), "%06d.hmel", r.song_id);
      cached = *cache / name;
      if (std::filesystem::exists(cached)) {
        ws.mels.push_back(read_mel_cache(cached, mel));
        continue;
      }
    }
    int sr = 0;
    const std::vector<float> wav = read_waveform(data_dir / r.waveform_path, &sr);
    if (sr != mel.sample_rate) {
      throw DataError(r.waveform_path + ": sample rate " + std::to_string(sr) + " does not match mel.sample_rate " +
                      std::to_string(mel.sample_rate));
    }
    ws.mels.push_back(frontend.compute(pad_or_truncate(wav, mel)));
    if (cache) write_mel_cache(cached, ws.mels.back());
  }
  ws.prefs = read_preference_data(data_dir);
  const auto n = static_cast<int>(ws.size());
  const auto check = [&](int id, const char* what) {
    if (id < 0 || id >= n) throw DataError(std::string(what) + " references unknown song id " + std::to_string(id));
  };
  for (const TripletSample& t : ws.prefs.triplets) {
    check(t.trig_song_id, "triplets.tsv");
    check(t.rec_song_id, "triplets.tsv");
  }
  for (const auto& [a, b] : ws.prefs.cooccurrence) {
    check(a, "cooccurrence.tsv");
    check(b, "cooccurrence.tsv");
  }
  for (const MatchingUser& u : ws.prefs.matching) {
    check(u.target, "matching.tsv");
    for (int t : u.triggers) check(t, "matching.tsv");
  }
  for (const RankingRow& r : ws.prefs.ranking) {
    check(r.candidate, "ranking.tsv");
    for (int h : r.history) check(h, "ranking.tsv");
  }
  for (const AnalysisPair& p : ws.prefs.analysis) {
    check(p.anchor, "analysis_pairs.tsv");
    check(p.other, "analysis_pairs.tsv");
  }
  for (int id : ws.prefs.train_songs) check(id, "splits.tsv");
  for (int id : ws.prefs.holdout_songs) check(id, "splits.tsv");
  return ws;
}

PairDataset tokenize_workspace(const Workspace& ws, const Vocabulary& vocab, int max_text_len) {
  PairDataset data;
  data.mels = ws.mels;
  for (const std::string& t : ws.texts) data.tokens.push_back(tokenize(t, vocab, max_text_len));
  return data;
}

TrainState run_pretrain(const Workspace& ws, const RunConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  if (ws.prefs.train_songs.empty()) throw DataError("pretrain: no training songs");
  std::vector<std::string> train_texts;
  for (int id : ws.prefs.train_songs) train_texts.push_back(ws.texts[static_cast<std::size_t>(id)]);
  Vocabulary vocab = build_vocab(train_texts, cfg.model.text.vocab_size);
  const PairDataset data = tokenize_workspace(ws, vocab, cfg.model.text.max_text_len);
  TrainState state = make_initial_state(cfg.model, cfg.loss, cfg.pretrain, std::move(vocab), cfg.pretrain.seed);
  pretrain(data, ws.prefs.train_songs, state, cfg.pretrain, on_step);
  return state;
}

TrainState run_finetune(const Workspace& ws, const RunConfig& cfg, TrainState init, Ablation ablation,
                        const StepCallback& on_step) {
  TrainConfig tc = cfg.finetune;
  tc.ablation = ablation;
  begin_finetune(init, tc, cfg.loss);
  const PairDataset data = tokenize_workspace(ws, init.vocab, init.model.text.max_text_len);
  const std::vector<TripletSample> rows =
      ablation == Ablation::kCfPairs ? pairs_as_triplets(ws.prefs.cooccurrence) : ws.prefs.triplets;
  finetune(data, rows, init, tc, on_step);
  return init;
}

EmbeddingStore audio_embeddings(const Workspace& ws, TrainState& state) {
  Matrix rows(static_cast<Eigen::Index>(ws.size()), state.model.audio.embed_dim);
  for (std::size_t i = 0; i < ws.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) = audio_encode(ws.mels[i], state.params, state.model.audio);
  }
  return EmbeddingStore(std::move(rows));
}

double genre_probe(const EmbeddingStore& store, const Workspace& ws, const ProbeConfig& cfg) {
  return linear_probe(store.matrix(), ws.genres, cfg);
}

double matching_hit_rate(const EmbeddingStore& store, const Workspace& ws, const EvalConfig& cfg) {
  MatchingTask task;
  task.users = ws.prefs.matching;
  task.candidates = store.ids();
  task.k_retrieve = cfg.k_retrieve;
  task.cutoff = cfg.cutoff;
  return hr_at_k(task, store);
}

double heldout_retrieval(const Workspace& ws, TrainState& state, int batch) {
  const PairDataset data = tokenize_workspace(ws, state.vocab, state.model.text.max_text_len);
  const std::vector<int>& ids = ws.prefs.holdout_songs;
  if (ids.empty()) throw DataError("retrieval: no held-out songs");
  return retrieval_top1(embed_audio(data, ids, state.params, state.model.audio),
                        embed_text(data, ids, state.params, state.model.text), batch);
}

MetricReport evaluate(const Workspace& ws, TrainState& state, const EvalConfig& cfg) {
  const EmbeddingStore store = audio_embeddings(ws, state);
  MetricReport r;
  r.genre_acc = genre_probe(store, ws, cfg.probe);
  r.language_acc = linear_probe(store.matrix(), ws.languages, cfg.probe);
  r.hit_rate = matching_hit_rate(store, ws, cfg);
  const RankingAuc ranking = ranking_auc(ws.prefs.ranking, store, cfg.ranker);
  r.ctr_auc = ranking.ctr_auc;
  r.cvr_auc = ranking.cvr_auc;
  r.retrieval_top1 = heldout_retrieval(ws, state, cfg.retrieval_batch);
  return r;
}

Json to_json(const MetricReport& r) {
  return {{"acc_genre", r.genre_acc}, {"acc_language", r.language_acc}, {"hit_rate", r.hit_rate},
          {"ctr_auc", r.ctr_auc},     {"cvr_auc", r.cvr_auc},           {"retrieval_top1", r.retrieval_top1}};
}

Json to_json(const SeparationReport& r) {
  return {{"positives", r.positives},       {"negatives", r.negatives},
          {"mean_positive", r.mean_positive}, {"mean_negative", r.mean_negative},
          {"mean_gap", r.mean_gap},         {"separation_auc", r.separation_auc},
          {"bin_centers", r.bin_centers},   {"positive_counts", r.positive_counts},
          {"negative_counts", r.negative_counts}};
}

void write_train_log(const std::filesystem::path& path, const TrainLog& log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write training log: " + path.string());
  out << std::setprecision(9) << "step\ttotal";
  std::vector<std::string> names;
  if (!log.steps.empty()) {
    for (const auto& [k, v] : log.steps.front().components) names.push_back(k);
  }
  for (const std::string& n : names) out << '\t' << n;
  out << "\twall_time_s\n";
  for (const StepRecord& r : log.steps) {
    out << r.step << '\t' << r.total;
    for (const std::string& n : names) out << '\t' << r.components.at(n);
    out << '\t' << r.wall_time_s << '\n';
  }
}

}  // namespace htcl::app
