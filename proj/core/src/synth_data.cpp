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

#include "htcl/synth_data.hpp"

#include <algorithm>
#include <complex>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>

#include "htcl/binary_io.hpp"
#include "htcl/error.hpp"
#include "htcl/rng.hpp"

namespace htcl {

namespace {

// Stream tags for Rng::derive.
enum Stream : std::uint64_t {
  kBankStream = 1,
  kGenreStream,
  kArtistStream,
  kSongStream,
  kWaveStream,
  kTextStream,
  kSplitStream,
  kTripletStream,
  kSessionStream,
  kUserStream,
  kRankingStream,
  kAnalysisStream,
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> random_unit(Rng& rng, int dim) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  double n = 0.0;
  for (double& x : v) {
    x = rng.normal();
    n += x * x;
  }
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

std::string language_word(int language, int i) {
  return "l" + std::to_string(language) + "w" + std::to_string(i);
}

std::string genre_word(int genre, int i) { return "g" + std::to_string(genre) + "w" + std::to_string(i); }

/// Zipf-like draw over a partition of `n` words.
int zipf_index(Rng& rng, int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = 1.0 / std::pow(i + 1.0, 0.8);
  return static_cast<int>(rng.categorical(w));
}

int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

std::string song_file(int id, const char* dir, const char* ext) {
  std::ostringstream s;
  s << dir << '/' << std::setw(6) << std::setfill('0') << id << ext;
  return s.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

int parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw DataError("");
    return v;
  } catch (const std::exception&) {
    throw DataError(what + ": expected integer, got '" + s + "'");
  }
}

std::vector<int> parse_id_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  if (s.empty()) return out;
  for (const std::string& part : split(s, ',')) out.push_back(parse_int(part, what));
  return out;
}

std::vector<std::vector<std::string>> read_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    rows.push_back(split(line, '\t'));
  }
  return rows;
}

void require_columns(const std::vector<std::string>& row, std::size_t n, const std::filesystem::path& path) {
  if (row.size() < n) {
    throw DataError(path.string() + ": expected " + std::to_string(n) + " columns, got " +
                    std::to_string(row.size()));
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::string join_ids(const std::vector<int>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) s += ',';
    s += std::to_string(ids[i]);
  }
  return s;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void GeneratorConfig::validate() const {
  auto positive = [](long v, const char* name) {
    if (v <= 0) throw ConfigError(std::string("data.") + name + " must be positive");
  };
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string("data.") + name + " must be in [0,1]");
  };
  positive(num_songs, "num_songs");
  positive(genres, "genres");
  positive(languages, "languages");
  positive(style_dim, "style_dim");
  positive(artists_per_genre_language, "artists_per_genre_language");
  positive(sample_rate, "sample_rate");
  if (!(duration_s > 0.0)) throw ConfigError("data.duration_s must be positive");
  positive(sinusoids_per_genre, "sinusoids_per_genre");
  if (tone_pool < sinusoids_per_genre) throw ConfigError("data.tone_pool must be >= data.sinusoids_per_genre");
  positive(language_partials, "language_partials");
  if (noise_std < 0.0) throw ConfigError("data.noise_std must be >= 0");
  if (!(transpose_semitones >= 0.0 && transpose_semitones <= 12.0)) {
    throw ConfigError("data.transpose_semitones must be in [0, 12]");
  }
  positive(words_per_language, "words_per_language");
  positive(words_per_genre, "words_per_genre");
  if (title_tokens_min < 0 || title_tokens_max < title_tokens_min) {
    throw ConfigError("data.title_tokens_min/max must satisfy 0 <= min <= max");
  }
  if (lyrics_tokens_min < 0 || lyrics_tokens_max < lyrics_tokens_min) {
    throw ConfigError("data.lyrics_tokens_min/max must satisfy 0 <= min <= max");
  }
  unit(language_mix, "language_mix");
  unit(featured_artist_rate, "featured_artist_rate");
  positive(num_users, "num_users");
  unit(eps, "eps");
  unit(session_mix_rate, "session_mix_rate");
  positive(neighbor_count, "neighbor_count");
  positive(triplets_per_song, "triplets_per_song");
  if (session_length < 2) throw ConfigError("data.session_length must be >= 2");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("data.holdout_fraction must be in [0,1)");
  }
  positive(triggers_per_user, "triggers_per_user");
  if (user_pool_size <= triggers_per_user) {
    throw ConfigError("data.user_pool_size must exceed data.triggers_per_user");
  }
  if (ranking_days < 2) throw ConfigError("data.ranking_days must be >= 2");
  positive(ranking_rows_per_day, "ranking_rows_per_day");
  positive(ranking_history, "ranking_history");
  positive(analysis_pairs_per_anchor, "analysis_pairs_per_anchor");
  unit(negative_same_genre_rate, "negative_same_genre_rate");
}

Corpus::Corpus(GeneratorConfig cfg, std::vector<SongSpec> songs, std::vector<Artist> artists,
               std::vector<TextDocument> texts, ToneBank bank)
    : cfg_(std::move(cfg)),
      songs_(std::move(songs)),
      artists_(std::move(artists)),
      texts_(std::move(texts)),
      bank_(std::move(bank)) {}

std::vector<float> Corpus::waveform(int song_id) const { return synthesize(song_id, true); }

std::vector<float> Corpus::noiseless_waveform(int song_id) const { return synthesize(song_id, false); }

std::vector<float> Corpus::synthesize(int song_id, bool with_noise) const {
  if (song_id < 0 || static_cast<std::size_t>(song_id) >= songs_.size()) {
    throw DataError("unknown song id " + std::to_string(song_id));
  }
  const SongSpec& song = songs_[static_cast<std::size_t>(song_id)];
  Rng rng(Rng::derive(cfg_.seed, kWaveStream, static_cast<std::uint64_t>(song_id)));
  const auto n = static_cast<std::size_t>(std::llround(song.duration_s * cfg_.sample_rate));
  const auto& freqs = bank_.genre_freqs[static_cast<std::size_t>(song.genre)];
  const auto& dirs = bank_.genre_dirs[static_cast<std::size_t>(song.genre)];
  const std::size_t partials = freqs.size();

  std::vector<double> amp(partials);
  std::vector<double> phase(partials);
  for (std::size_t j = 0; j < partials; ++j) {
    amp[j] = 0.25 * std::exp(std::tanh(0.35 * dot(song.style, dirs[j])));
    phase[j] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  const double tremolo = 1.5 + std::tanh(0.35 * dot(song.style, dirs[partials]));
  const auto& lang_freqs = bank_.language_freqs[static_cast<std::size_t>(song.language)];
  const double syllable_rate = bank_.language_rates[static_cast<std::size_t>(song.language)];
  std::vector<double> lang_phase(lang_freqs.size());
  for (double& p : lang_phase) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double env_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

  // Each sinusoid advances as a unit phasor rotated once per sample.
  const double two_pi = 2.0 * std::numbers::pi;
  const auto phasor = [](double ph) { return std::polar(1.0, ph); };
  const double key = std::exp2(song.transpose / 12.0);
  const auto step = [&](double hz) { return std::polar(1.0, two_pi * key * hz / cfg_.sample_rate); };
  const auto rotate = [](std::complex<double>& z, const std::complex<double>& w) {
    z = {z.real() * w.real() - z.imag() * w.imag(), z.real() * w.imag() + z.imag() * w.real()};
  };
  std::vector<std::complex<double>> tone(partials);
  std::vector<std::complex<double>> tone_step(partials);
  for (std::size_t j = 0; j < partials; ++j) {
    tone[j] = phasor(phase[j]);
    tone_step[j] = step(freqs[j]);
  }
  std::vector<std::complex<double>> voice(lang_freqs.size());
  std::vector<std::complex<double>> voice_step(lang_freqs.size());
  for (std::size_t j = 0; j < lang_freqs.size(); ++j) {
    voice[j] = phasor(lang_phase[j]);
    voice_step[j] = step(lang_freqs[j]);
  }
  std::complex<double> env = phasor(env_phase);
  const std::complex<double> env_step = step(tremolo);
  std::complex<double> syl = 1.0;
  const std::complex<double> syl_step = step(syllable_rate);

  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double tonal = 0.0;
    for (std::size_t j = 0; j < partials; ++j) {
      tonal += amp[j] * tone[j].imag();
      rotate(tone[j], tone_step[j]);
    }
    tonal *= 1.0 + 0.5 * env.imag();
    double vocal = 0.0;
    for (std::size_t j = 0; j < voice.size(); ++j) {
      vocal += voice[j].imag();
      rotate(voice[j], voice_step[j]);
    }
    vocal *= 0.2 * (0.6 + 0.4 * syl.imag());
    rotate(env, env_step);
    rotate(syl, syl_step);
    out[i] = static_cast<float>(tonal + vocal);
  }
  if (with_noise && cfg_.noise_std > 0.0) {
    Rng noise(Rng::derive(cfg_.seed, kWaveStream + 1000, static_cast<std::uint64_t>(song_id)));
    for (float& s : out) s += static_cast<float>(noise.normal() * cfg_.noise_std);
  }
  return out;
}

std::vector<LabelRow> Corpus::label_table() const {
  std::vector<LabelRow> rows;
  rows.reserve(songs_.size());
  for (const SongSpec& s : songs_) rows.push_back({s.song_id, s.genre, s.language});
  return rows;
}

Corpus generate_corpus(const GeneratorConfig& cfg) {
  cfg.validate();
  const auto k = static_cast<std::size_t>(cfg.style_dim);

  ToneBank bank;
  {
    Rng rng(Rng::derive(cfg.seed, kBankStream));
    const double nyquist_cap = std::min(3000.0, 0.45 * cfg.sample_rate);
    std::vector<double> pool;
    for (int j = 0; j < cfg.tone_pool; ++j) pool.push_back(log_uniform(rng, 110.0, nyquist_cap));
    for (int g = 0; g < cfg.genres; ++g) {
      std::vector<double> freqs;
      std::vector<std::vector<double>> dirs;
      rng.shuffle(pool);
      freqs.assign(pool.begin(), pool.begin() + cfg.sinusoids_per_genre);
      for (int j = 0; j <= cfg.sinusoids_per_genre; ++j) dirs.push_back(random_unit(rng, cfg.style_dim));
      bank.genre_freqs.push_back(std::move(freqs));
      bank.genre_dirs.push_back(std::move(dirs));
    }
    for (int l = 0; l < cfg.languages; ++l) {
      std::vector<double> freqs;
      for (int j = 0; j < cfg.language_partials; ++j) {
        freqs.push_back(log_uniform(rng, 200.0, std::min(2500.0, 0.45 * cfg.sample_rate)));
      }
      bank.language_freqs.push_back(std::move(freqs));
      bank.language_rates.push_back(rng.uniform(2.0, 7.0));
    }
  }

  std::vector<std::vector<double>> genre_centers;
  {
    Rng rng(Rng::derive(cfg.seed, kGenreStream));
    for (int g = 0; g < cfg.genres; ++g) {
      std::vector<double> c(k);
      for (double& x : c) x = rng.normal() * cfg.genre_spread;
      genre_centers.push_back(std::move(c));
    }
  }

  std::vector<Artist> artists;
  {
    Rng rng(Rng::derive(cfg.seed, kArtistStream));
    for (int g = 0; g < cfg.genres; ++g) {
      for (int l = 0; l < cfg.languages; ++l) {
        for (int i = 0; i < cfg.artists_per_genre_language; ++i) {
          Artist a;
          a.genre = g;
          a.language = l;
          a.center = genre_centers[static_cast<std::size_t>(g)];
          for (double& x : a.center) x += rng.normal() * cfg.artist_spread;
          a.name = "artist" + std::to_string(artists.size());
          artists.push_back(std::move(a));
        }
      }
    }
  }

  std::vector<SongSpec> songs;
  std::vector<TextDocument> texts;
  songs.reserve(static_cast<std::size_t>(cfg.num_songs));
  for (int id = 0; id < cfg.num_songs; ++id) {
    Rng rng(Rng::derive(cfg.seed, kSongStream, static_cast<std::uint64_t>(id)));
    SongSpec s;
    s.song_id = id;
    // Cycle genres so every genre is present whenever num_songs >= genres.
    s.genre = id % cfg.genres;
    s.language = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.languages)));
    const int slot = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.artists_per_genre_language)));
    s.artist = (s.genre * cfg.languages + s.language) * cfg.artists_per_genre_language + slot;
    s.style = artists[static_cast<std::size_t>(s.artist)].center;
    for (double& x : s.style) x += rng.normal() * cfg.song_spread;
    s.duration_s = cfg.duration_s;
    s.transpose = rng.uniform(-cfg.transpose_semitones, cfg.transpose_semitones);

    Rng trng(Rng::derive(cfg.seed, kTextStream, static_cast<std::uint64_t>(id)));
    TextDocument doc;
    const int title_len = uniform_int(trng, cfg.title_tokens_min, cfg.title_tokens_max);
    for (int t = 0; t < title_len; ++t) {
      if (t > 0) doc.title += ' ';
      doc.title += language_word(s.language, zipf_index(trng, cfg.words_per_language));
    }
    doc.artists.push_back(artists[static_cast<std::size_t>(s.artist)].name);
    if (trng.bernoulli(cfg.featured_artist_rate)) {
      const int base = s.genre * cfg.languages * cfg.artists_per_genre_language;
      const int other = base + static_cast<int>(trng.below(
                                   static_cast<std::uint64_t>(cfg.languages * cfg.artists_per_genre_language)));
      if (other != s.artist) doc.artists.push_back(artists[static_cast<std::size_t>(other)].name);
    }
    const int lyric_len = uniform_int(trng, cfg.lyrics_tokens_min, cfg.lyrics_tokens_max);
    for (int t = 0; t < lyric_len; ++t) {
      if (t > 0) doc.lyrics += ' ';
      doc.lyrics += trng.bernoulli(cfg.language_mix)
                        ? language_word(s.language, zipf_index(trng, cfg.words_per_language))
                        : genre_word(s.genre, zipf_index(trng, cfg.words_per_genre));
    }
    songs.push_back(std::move(s));
    texts.push_back(std::move(doc));
  }
  return Corpus(cfg, std::move(songs), std::move(artists), std::move(texts), std::move(bank));
}

double style_distance(const SongSpec& a, const SongSpec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.style.size(); ++i) {
    const double d = a.style[i] - b.style[i];
    s += d * d;
  }
  return std::sqrt(s);
}

std::vector<std::vector<int>> style_neighbors(const Corpus& corpus, const std::vector<int>& pool, int k) {
  if (static_cast<int>(pool.size()) <= k) {
    throw DataError("corpus pool of " + std::to_string(pool.size()) + " songs is too small for " +
                    std::to_string(k) + " neighbours");
  }
  const auto& songs = corpus.songs();
  std::vector<std::vector<int>> out(songs.size());
  std::vector<std::pair<double, int>> dist;
  for (const SongSpec& s : songs) {
    dist.clear();
    for (int id : pool) {
      if (id == s.song_id) continue;
      dist.emplace_back(style_distance(s, songs[static_cast<std::size_t>(id)]), id);
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    auto& nb = out[static_cast<std::size_t>(s.song_id)];
    for (int i = 0; i < k; ++i) nb.push_back(dist[static_cast<std::size_t>(i)].second);
  }
  return out;
}

PreferenceData generate_preference_data(const Corpus& corpus, const GeneratorConfig& cfg) {
  cfg.validate();
  if (corpus.size() == 0) throw DataError("generate_preference_data: empty corpus");
  const auto& songs = corpus.songs();
  const int n = static_cast<int>(songs.size());
  PreferenceData data;

  {
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng(Rng::derive(cfg.seed, kSplitStream));
    rng.shuffle(order);
    const int holdout = static_cast<int>(std::floor(cfg.holdout_fraction * n));
    data.holdout_songs.assign(order.begin(), order.begin() + holdout);
    data.train_songs.assign(order.begin() + holdout, order.end());
    std::sort(data.holdout_songs.begin(), data.holdout_songs.end());
    std::sort(data.train_songs.begin(), data.train_songs.end());
  }
  const auto& train = data.train_songs;
  const auto train_nb = style_neighbors(corpus, train, cfg.neighbor_count);

  auto random_other = [&](Rng& rng, int self) {
    int pick = self;
    while (pick == self) pick = train[static_cast<std::size_t>(rng.below(train.size()))];
    return pick;
  };

  // Favoured triplets: rec is a style neighbour of trig with prob 1-eps.
  {
    std::set<std::pair<int, int>> seen;
    for (int trig : train) {
      Rng rng(Rng::derive(cfg.seed, kTripletStream, static_cast<std::uint64_t>(trig)));
      const auto& nb = train_nb[static_cast<std::size_t>(trig)];
      for (int r = 0; r < cfg.triplets_per_song; ++r) {
        const int rec = rng.bernoulli(cfg.eps) ? random_other(rng, trig)
                                               : nb[static_cast<std::size_t>(rng.below(nb.size()))];
        if (seen.insert({trig, rec}).second) data.triplets.push_back({trig, rec, true});
      }
    }
  }

  // Sessions: each next song is a neighbour with prob 1-session_mix_rate.
  {
    std::set<std::pair<int, int>> seen;
    const std::size_t target_pairs = train.size() * static_cast<std::size_t>(cfg.triplets_per_song);
    const std::size_t sessions = (target_pairs + cfg.session_length - 2) / (cfg.session_length - 1);
    for (std::size_t s = 0; s < sessions; ++s) {
      Rng rng(Rng::derive(cfg.seed, kSessionStream, s));
      int cur = train[static_cast<std::size_t>(rng.below(train.size()))];
      for (int step = 1; step < cfg.session_length; ++step) {
        const auto& nb = train_nb[static_cast<std::size_t>(cur)];
        const int next = rng.bernoulli(cfg.session_mix_rate)
                             ? random_other(rng, cur)
                             : nb[static_cast<std::size_t>(rng.below(nb.size()))];
        if (seen.insert({cur, next}).second) data.cooccurrence.emplace_back(cur, next);
        cur = next;
      }
    }
  }

  // Users: a style centre and a pool of the songs closest to it.
  std::vector<int> all(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
  const int pool_size = std::min(cfg.user_pool_size, n);
  if (pool_size <= cfg.triggers_per_user) {
    throw DataError("corpus too small for " + std::to_string(cfg.triggers_per_user) + " triggers per user");
  }
  std::vector<std::vector<double>> centres;
  std::vector<std::vector<int>> pools;
  for (int u = 0; u < cfg.num_users; ++u) {
    Rng rng(Rng::derive(cfg.seed, kUserStream, static_cast<std::uint64_t>(u)));
    std::vector<double> centre = songs[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n)))].style;
    for (double& x : centre) x += rng.normal() * 0.3;
    std::vector<std::pair<double, int>> dist;
    for (const SongSpec& s : songs) {
      double d = 0.0;
      for (std::size_t i = 0; i < centre.size(); ++i) d += (s.style[i] - centre[i]) * (s.style[i] - centre[i]);
      dist.emplace_back(std::sqrt(d), s.song_id);
    }
    std::partial_sort(dist.begin(), dist.begin() + pool_size, dist.end());
    std::vector<int> pool;
    for (int i = 0; i < pool_size; ++i) pool.push_back(dist[static_cast<std::size_t>(i)].second);
    rng.shuffle(pool);

    MatchingUser mu;
    mu.user_id = u;
    mu.triggers.assign(pool.begin(), pool.begin() + cfg.triggers_per_user);
    mu.target = pool[static_cast<std::size_t>(cfg.triggers_per_user)];
    data.matching.push_back(std::move(mu));
    centres.push_back(std::move(centre));
    pools.push_back(std::move(pool));
  }

  // Ranking rows: click/favour probabilities fall with style distance to the
  // user's centre, scaled by the median song-to-centre distance.
  {
    std::vector<double> sample;
    Rng srng(Rng::derive(cfg.seed, kRankingStream, 0xffff));
    for (int i = 0; i < 2000; ++i) {
      const auto& c = centres[static_cast<std::size_t>(srng.below(centres.size()))];
      const auto& s = songs[static_cast<std::size_t>(srng.below(static_cast<std::uint64_t>(n)))];
      double d = 0.0;
      for (std::size_t j = 0; j < c.size(); ++j) d += (s.style[j] - c[j]) * (s.style[j] - c[j]);
      sample.push_back(std::sqrt(d));
    }
    std::nth_element(sample.begin(), sample.begin() + sample.size() / 2, sample.end());
    const double scale = sample[sample.size() / 2];
    for (int u = 0; u < cfg.num_users; ++u) {
      const auto& pool = pools[static_cast<std::size_t>(u)];
      const auto& c = centres[static_cast<std::size_t>(u)];
      std::vector<int> history(pool.begin(),
                               pool.begin() + std::min<std::size_t>(pool.size(), static_cast<std::size_t>(cfg.ranking_history)));
      for (int day = 0; day < cfg.ranking_days; ++day) {
        Rng rng(Rng::derive(cfg.seed, kRankingStream,
                            static_cast<std::uint64_t>(u) * 1000u + static_cast<std::uint64_t>(day)));
        for (int r = 0; r < cfg.ranking_rows_per_day; ++r) {
          RankingRow row;
          row.user_id = u;
          row.day = day;
          row.history = history;
          row.candidate = rng.bernoulli(0.5) ? pool[static_cast<std::size_t>(rng.below(pool.size()))]
                                             : static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
          const auto& s = songs[static_cast<std::size_t>(row.candidate)];
          double d = 0.0;
          for (std::size_t j = 0; j < c.size(); ++j) d += (s.style[j] - c[j]) * (s.style[j] - c[j]);
          const double rel = std::sqrt(d) / scale;
          row.click = rng.bernoulli(sigmoid(4.0 * (0.6 - rel)));
          row.favor = row.click && rng.bernoulli(sigmoid(4.0 * (0.5 - rel)));
          data.ranking.push_back(std::move(row));
        }
      }
    }
  }

  // Held-out analysis pairs: anchors never appear in triplets or sessions.
  if (!data.holdout_songs.empty()) {
    const auto all_nb = style_neighbors(corpus, all, cfg.neighbor_count);
    std::vector<std::vector<int>> by_genre(static_cast<std::size_t>(cfg.genres));
    for (const SongSpec& s : songs) by_genre[static_cast<std::size_t>(s.genre)].push_back(s.song_id);
    for (int anchor : data.holdout_songs) {
      Rng rng(Rng::derive(cfg.seed, kAnalysisStream, static_cast<std::uint64_t>(anchor)));
      const auto& nb = all_nb[static_cast<std::size_t>(anchor)];
      const auto& same = by_genre[static_cast<std::size_t>(songs[static_cast<std::size_t>(anchor)].genre)];
      for (int p = 0; p < cfg.analysis_pairs_per_anchor; ++p) {
        data.analysis.push_back({anchor, nb[static_cast<std::size_t>(rng.below(nb.size()))], true});
        int neg = anchor;
        for (int attempt = 0; attempt < 1000; ++attempt) {
          const bool same_genre = rng.bernoulli(cfg.negative_same_genre_rate) && same.size() > nb.size() + 1;
          neg = same_genre ? same[static_cast<std::size_t>(rng.below(same.size()))]
                           : static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
          if (neg != anchor && std::find(nb.begin(), nb.end(), neg) == nb.end()) break;
        }
        data.analysis.push_back({anchor, neg, false});
      }
    }
  }
  return data;
}

void write_waveform(const std::filesystem::path& path, std::span<const float> samples, int sample_rate) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write waveform: " + path.string());
  out.write("HWAV", 4);
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate));
  out.write(reinterpret_cast<const char*>(samples.data()),
            static_cast<std::streamsize>(samples.size() * sizeof(float)));
  if (!out) throw DataError("failed writing waveform: " + path.string());
}

std::vector<float> read_waveform(const std::filesystem::path& path, int* sample_rate) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("cannot open waveform: " + path.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  const std::string what = "waveform " + path.string();
  io::expect_magic(in, "HWAV", what);
  const auto sr = io::read_pod<std::uint32_t>(in, what);
  if (sample_rate != nullptr) *sample_rate = static_cast<int>(sr);
  if ((size - 8) % sizeof(float) != 0) throw CorruptionError(what + ": truncated sample data");
  std::vector<float> samples((size - 8) / sizeof(float));
  io::read_exact(in, reinterpret_cast<char*>(samples.data()), samples.size() * sizeof(float), what);
  return samples;
}

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir / "audio");
  std::filesystem::create_directories(dir / "text");
  auto manifest = open_out(dir / "manifest.tsv");
  manifest << "# song_id\tgenre\tlanguage\twaveform\ttext\n";
  for (const SongSpec& s : corpus.songs()) {
    const std::string wav = song_file(s.song_id, "audio", ".f32");
    const std::string txt = song_file(s.song_id, "text", ".txt");
    write_waveform(dir / wav, corpus.waveform(s.song_id), corpus.config().sample_rate);
    write_text_document(dir / txt, corpus.texts()[static_cast<std::size_t>(s.song_id)]);
    manifest << s.song_id << '\t' << s.genre << '\t' << s.language << '\t' << wav << '\t' << txt << '\n';
  }
}

void write_preference_data(const std::filesystem::path& dir, const PreferenceData& data) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / "triplets.tsv");
    out << "# trig\trec\trec_text_present\n";
    for (const auto& t : data.triplets) {
      out << t.trig_song_id << '\t' << t.rec_song_id << '\t' << (t.rec_text_present ? 1 : 0) << '\n';
    }
  }
  {
    auto out = open_out(dir / "cooccurrence.tsv");
    out << "# a\tb\n";
    for (const auto& [a, b] : data.cooccurrence) out << a << '\t' << b << '\n';
  }
  {
    auto out = open_out(dir / "matching.tsv");
    out << "# user\ttarget\ttriggers\n";
    for (const auto& u : data.matching) out << u.user_id << '\t' << u.target << '\t' << join_ids(u.triggers) << '\n';
  }
  {
    auto out = open_out(dir / "ranking.tsv");
    out << "# user\tday\tcandidate\tclick\tfavor\thistory\n";
    for (const auto& r : data.ranking) {
      out << r.user_id << '\t' << r.day << '\t' << r.candidate << '\t' << (r.click ? 1 : 0) << '\t'
          << (r.favor ? 1 : 0) << '\t' << join_ids(r.history) << '\n';
    }
  }
  {
    auto out = open_out(dir / "analysis_pairs.tsv");
    out << "# anchor\tother\tlabel\n";
    for (const auto& p : data.analysis) out << p.anchor << '\t' << p.other << '\t' << (p.positive ? 1 : 0) << '\n';
  }
  {
    auto out = open_out(dir / "splits.tsv");
    out << "# song_id\tsplit\n";
    std::vector<std::pair<int, const char*>> rows;
    for (int id : data.train_songs) rows.emplace_back(id, "train");
    for (int id : data.holdout_songs) rows.emplace_back(id, "holdout");
    std::sort(rows.begin(), rows.end());
    for (const auto& [id, split_name] : rows) out << id << '\t' << split_name << '\n';
  }
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.tsv";
  std::vector<ManifestRow> rows;
  for (const auto& cols : read_tsv(path)) {
    require_columns(cols, 5, path);
    ManifestRow r;
    r.song_id = parse_int(cols[0], path.string());
    r.genre = parse_int(cols[1], path.string());
    r.language = parse_int(cols[2], path.string());
    r.waveform_path = cols[3];
    r.text_path = cols[4];
    if (r.song_id != static_cast<int>(rows.size())) {
      throw DataError(path.string() + ": song ids must be dense and ascending");
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw DataError(path.string() + ": empty manifest");
  return rows;
}

std::vector<TripletSample> read_triplets(const std::filesystem::path& path) {
  std::vector<TripletSample> out;
  for (const auto& cols : read_tsv(path)) {
    require_columns(cols, 3, path);
    out.push_back({parse_int(cols[0], path.string()), parse_int(cols[1], path.string()),
                   parse_int(cols[2], path.string()) != 0});
  }
  return out;
}

std::vector<std::pair<int, int>> read_pairs(const std::filesystem::path& path) {
  std::vector<std::pair<int, int>> out;
  for (const auto& cols : read_tsv(path)) {
    require_columns(cols, 2, path);
    out.emplace_back(parse_int(cols[0], path.string()), parse_int(cols[1], path.string()));
  }
  return out;
}

std::vector<AnalysisPair> read_analysis_pairs(const std::filesystem::path& path) {
  std::vector<AnalysisPair> out;
  for (const auto& cols : read_tsv(path)) {
    require_columns(cols, 3, path);
    out.push_back({parse_int(cols[0], path.string()), parse_int(cols[1], path.string()),
                   parse_int(cols[2], path.string()) != 0});
  }
  return out;
}

PreferenceData read_preference_data(const std::filesystem::path& dir) {
  PreferenceData data;
  data.triplets = read_triplets(dir / "triplets.tsv");
  data.cooccurrence = read_pairs(dir / "cooccurrence.tsv");
  {
    const auto path = dir / "matching.tsv";
    for (const auto& cols : read_tsv(path)) {
      require_columns(cols, 3, path);
      data.matching.push_back({parse_int(cols[0], path.string()), parse_id_list(cols[2], path.string()),
                               parse_int(cols[1], path.string())});
    }
  }
  {
    const auto path = dir / "ranking.tsv";
    for (const auto& cols : read_tsv(path)) {
      require_columns(cols, 6, path);
      RankingRow r;
      r.user_id = parse_int(cols[0], path.string());
      r.day = parse_int(cols[1], path.string());
      r.candidate = parse_int(cols[2], path.string());
      r.click = parse_int(cols[3], path.string()) != 0;
      r.favor = parse_int(cols[4], path.string()) != 0;
      r.history = parse_id_list(cols[5], path.string());
      data.ranking.push_back(std::move(r));
    }
  }
  data.analysis = read_analysis_pairs(dir / "analysis_pairs.tsv");
  {
    const auto path = dir / "splits.tsv";
    for (const auto& cols : read_tsv(path)) {
      require_columns(cols, 2, path);
      (cols[1] == "holdout" ? data.holdout_songs : data.train_songs).push_back(parse_int(cols[0], path.string()));
    }
  }
  return data;
}

}  // namespace htcl
