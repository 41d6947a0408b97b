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

// Synthetic stand-in for the song corpus and user-interaction logs.
//
// Latent factors: every song has a genre, a language (via its artist) and a
// continuous style vector (genre centre + artist offset + song offset).
// Audio is a genre-specific bank of partials whose amplitudes and tremolo
// rate are modulated by style, plus language-specific partials and noise.
// Text draws tokens from language- and genre-specific partitions of the
// vocabulary. Preference data (favoured triplets, sessions, users) is driven
// by style proximity, which correlates with genre but is not determined by it.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "htcl/text_pipeline.hpp"

namespace htcl {

struct GeneratorConfig {
  int num_songs = 2000;
  int genres = 8;
  int languages = 4;
  int style_dim = 8;
  int artists_per_genre_language = 3;
  double genre_spread = 1.2;
  double artist_spread = 0.8;
  double song_spread = 0.5;

  int sample_rate = 16000;
  double duration_s = 8.0;
  int sinusoids_per_genre = 8;
  /// Genre banks draw their sinusoids without replacement from one shared
  /// pool of this many frequencies, so banks overlap.
  int tone_pool = 12;
  int language_partials = 3;
  double noise_std = 0.05;
  /// Each song is transposed by a uniform random shift in
  /// [-transpose_semitones, transpose_semitones].
  double transpose_semitones = 4.0;

  int words_per_language = 40;
  int words_per_genre = 40;
  int title_tokens_min = 2;
  int title_tokens_max = 4;
  int lyrics_tokens_min = 16;
  int lyrics_tokens_max = 32;
  /// Probability a lyric token comes from the language partition (else genre).
  double language_mix = 0.5;
  double featured_artist_rate = 0.2;

  int num_users = 1000;
  double eps = 0.1;
  double session_mix_rate = 0.5;
  int neighbor_count = 10;
  int triplets_per_song = 4;
  int session_length = 8;
  double holdout_fraction = 0.2;
  int triggers_per_user = 30;
  int user_pool_size = 60;
  int ranking_days = 8;
  int ranking_rows_per_day = 8;
  int ranking_history = 10;
  int analysis_pairs_per_anchor = 2;
  /// Chance an analysis negative shares the anchor's genre.
  double negative_same_genre_rate = 1.0;

  std::uint64_t seed = 7;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

struct SongSpec {
  int song_id = 0;
  int genre = 0;
  int language = 0;
  int artist = 0;
  std::vector<double> style;
  double duration_s = 0.0;
  /// Key shift applied to every partial, in semitones.
  double transpose = 0.0;
};

struct Artist {
  int genre = 0;
  int language = 0;
  std::vector<double> center;
  std::string name;
};

/// Frequencies and style projections shared by every song of a genre.
struct ToneBank {
  std::vector<std::vector<double>> genre_freqs;          // genre x partial
  std::vector<std::vector<std::vector<double>>> genre_dirs;  // genre x (partial + 1) x style_dim
  std::vector<std::vector<double>> language_freqs;       // language x partial
  std::vector<double> language_rates;                    // syllable-rate tremolo, Hz
};

struct LabelRow {
  int song_id = 0;
  int genre = 0;
  int language = 0;
};

class Corpus {
 public:
  Corpus() = default;
  Corpus(GeneratorConfig cfg, std::vector<SongSpec> songs, std::vector<Artist> artists,
         std::vector<TextDocument> texts, ToneBank bank);

  const GeneratorConfig& config() const { return cfg_; }
  const std::vector<SongSpec>& songs() const { return songs_; }
  const std::vector<Artist>& artists() const { return artists_; }
  const std::vector<TextDocument>& texts() const { return texts_; }
  const ToneBank& bank() const { return bank_; }
  std::size_t size() const { return songs_.size(); }

  /// Regenerated on demand from the song's own random stream, so the store
  /// costs no memory; repeated calls return identical samples.
  std::vector<float> waveform(int song_id) const;
  /// Same signal without the additive noise term.
  std::vector<float> noiseless_waveform(int song_id) const;

  std::vector<LabelRow> label_table() const;

 private:
  std::vector<float> synthesize(int song_id, bool with_noise) const;

  GeneratorConfig cfg_;
  std::vector<SongSpec> songs_;
  std::vector<Artist> artists_;
  std::vector<TextDocument> texts_;
  ToneBank bank_;
};

Corpus generate_corpus(const GeneratorConfig& cfg);

struct TripletSample {
  int trig_song_id = 0;
  int rec_song_id = 0;
  bool rec_text_present = true;
};

struct MatchingUser {
  int user_id = 0;
  std::vector<int> triggers;
  int target = 0;
};

struct RankingRow {
  int user_id = 0;
  int day = 0;
  std::vector<int> history;
  int candidate = 0;
  bool click = false;
  bool favor = false;
};

struct AnalysisPair {
  int anchor = 0;
  int other = 0;
  bool positive = false;
};

struct PreferenceData {
  std::vector<TripletSample> triplets;
  std::vector<std::pair<int, int>> cooccurrence;
  std::vector<MatchingUser> matching;
  std::vector<RankingRow> ranking;
  std::vector<AnalysisPair> analysis;
  std::vector<int> train_songs;
  std::vector<int> holdout_songs;
};

/// Indices of the k nearest songs (Euclidean style distance, ascending id on
/// ties) among `pool`, excluding the song itself.
std::vector<std::vector<int>> style_neighbors(const Corpus& corpus, const std::vector<int>& pool, int k);

double style_distance(const SongSpec& a, const SongSpec& b);

PreferenceData generate_preference_data(const Corpus& corpus, const GeneratorConfig& cfg);

// On-disk layout (all paths relative to the output directory):
//   manifest.tsv         song_id, genre, language, waveform path, text path
//   audio/NNNNNN.f32     "HWAV", u32 sample_rate, float32 samples
//   text/NNNNNN.txt      title/artists/lyrics record
//   triplets.tsv         trig, rec, rec_text_present
//   cooccurrence.tsv     a, b
//   matching.tsv         user, target, comma-separated triggers
//   ranking.tsv          user, day, candidate, click, favor, comma-separated history
//   analysis_pairs.tsv   anchor, other, label (1 positive / 0 negative)
//   splits.tsv           song_id, train|holdout
void write_waveform(const std::filesystem::path& path, std::span<const float> samples, int sample_rate);
std::vector<float> read_waveform(const std::filesystem::path& path, int* sample_rate = nullptr);

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);
void write_preference_data(const std::filesystem::path& dir, const PreferenceData& data);

struct ManifestRow {
  int song_id = 0;
  int genre = 0;
  int language = 0;
  std::string waveform_path;
  std::string text_path;
};

std::vector<ManifestRow> read_manifest(const std::filesystem::path& dir);
PreferenceData read_preference_data(const std::filesystem::path& dir);
std::vector<TripletSample> read_triplets(const std::filesystem::path& path);
std::vector<std::pair<int, int>> read_pairs(const std::filesystem::path& path);
std::vector<AnalysisPair> read_analysis_pairs(const std::filesystem::path& path);

}  // namespace htcl
