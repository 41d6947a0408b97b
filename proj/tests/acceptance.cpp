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

// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "htcl/app.hpp"
#include "htcl/cli.hpp"
#include "htcl/contrastive_core.hpp"
#include "htcl/encoders.hpp"
#include "htcl/eval.hpp"
#include "test_support.hpp"

namespace {

using namespace htcl;
namespace fs = std::filesystem;
using testing::naive_directional;
using testing::naive_symmetric;
using testing::numeric_grad;
using testing::random_unit_rows;
using testing::relative_error;

// Pinned thresholds.
constexpr double kOracleTolerance = 1e-6;
constexpr double kGradTolerance = 1e-4;
constexpr int kShapeFrames = 1251;
constexpr int kShapePositions = 157;
constexpr int kMaxPretrainSteps = 3000;
constexpr double kMinTop1 = 0.15;
constexpr double kMinGenreAcc = 0.5;
constexpr double kPretrainBudgetS = 30 * 60;
constexpr double kMinSeparationAuc = 0.7;
constexpr double kMaxGenreDrop = 0.05;
constexpr double kFinetuneBudgetS = 15 * 60;
constexpr double kAucHalfBand = 0.02;
constexpr int kReproSteps = 200;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

Outcome loss_oracle() {
  std::mt19937_64 gen(101);
  std::uniform_int_distribution<int> batch(1, 16);
  std::uniform_int_distribution<int> dim(1, 32);
  std::uniform_real_distribution<double> temp(0.05, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int b = batch(gen);
    const int d = dim(gen);
    const double tau = temp(gen);
    const MatrixD a = random_unit_rows(b, d, gen);
    const MatrixD t = random_unit_rows(b, d, gen);
    worst = std::max(worst, std::abs(info_nce_directional<double>(a, t, tau) - naive_directional(a, t, tau)));
    worst = std::max(worst, std::abs(symmetric_loss<double>(a, t, tau).total - naive_symmetric(a, t, tau)));
  }
  return {worst < kOracleTolerance, "max abs error " + fmt(worst) + " over 100 instances"};
}

Outcome gradient_check() {
  std::mt19937_64 gen(102);
  Rng rng(103);
  const int b = 4;
  const int d = 8;
  double worst = 0.0;
  {
    MatrixD a = random_unit_rows(b, d, gen);
    MatrixD t = random_unit_rows(b, d, gen);
    MatrixD tau = MatrixD::Constant(1, 1, 0.2);
    PairGrad<double> g;
    symmetric_loss<double>(a, t, tau(0, 0), &g);
    const auto f = [&] { return symmetric_loss<double>(a, t, tau(0, 0)).total; };
    worst = std::max(worst, relative_error(g.d_query, numeric_grad(a, f)));
    worst = std::max(worst, relative_error(g.d_key, numeric_grad(t, f)));
    worst = std::max(worst, relative_error(MatrixD::Constant(1, 1, g.d_tau), numeric_grad(tau, f)));
  }
  {
    MatrixD trig = random_unit_rows(b, d, gen);
    MatrixD rec = random_unit_rows(b, d, gen);
    MatrixD text = random_unit_rows(b, d, gen);
    FusionParams<double> fp = FusionParams<double>::init(d, 2 * d, rng);
    LossConfig cfg;
    cfg.temperature = 0.2;
    MatrixD tau = MatrixD::Constant(1, 1, cfg.temperature);
    Stage2Grad<double> g;
    stage2_loss<double>(trig, rec, text, fp, cfg, &g);
    const auto f = [&] {
      LossConfig c = cfg;
      c.temperature = tau(0, 0);
      return stage2_loss<double>(trig, rec, text, fp, c).total;
    };
    worst = std::max(worst, relative_error(g.d_trigger_audio, numeric_grad(trig, f)));
    worst = std::max(worst, relative_error(g.d_rec_audio, numeric_grad(rec, f)));
    worst = std::max(worst, relative_error(g.d_rec_text, numeric_grad(text, f)));
    worst = std::max(worst, relative_error(g.d_fusion.w1, numeric_grad(fp.w1, f)));
    worst = std::max(worst, relative_error(g.d_fusion.b1, numeric_grad(fp.b1, f)));
    worst = std::max(worst, relative_error(g.d_fusion.w2, numeric_grad(fp.w2, f)));
    worst = std::max(worst, relative_error(g.d_fusion.b2, numeric_grad(fp.b2, f)));
    worst = std::max(worst, relative_error(MatrixD::Constant(1, 1, g.d_tau), numeric_grad(tau, f)));
  }
  return {worst < kGradTolerance, "max relative error " + fmt(worst) + " (B=4, D=8, float64)"};
}

Outcome shape_chain() {
  MelConfig mel;
  mel.target_seconds = 120.0;
  GeneratorConfig gen;
  gen.num_songs = 8;
  gen.duration_s = 120.0;
  const Corpus corpus = generate_corpus(gen);
  const MelSpectrogram spec = waveform_to_mel(corpus.waveform(0), mel);
  ModelConfig model;
  const int positions = conv_stack_length(model.audio, spec.frames());
  ParamStore params = init_params(model, 1);
  const RowVector e = audio_encode(spec, params, model.audio);
  const bool ok = spec.frames() == kShapeFrames && spec.n_mels() == 128 && positions == kShapePositions &&
                  e.size() == model.audio.embed_dim;
  return {ok, "1x" + std::to_string(spec.frames()) + "x" + std::to_string(spec.n_mels()) + " -> " +
                  std::to_string(positions) + " positions -> " + std::to_string(e.size()) + "-d embedding"};
}

Outcome metric_sanity() {
  std::mt19937_64 gen(104);
  MatchingTask task;
  const int n = 2000;
  for (int i = 0; i < n; ++i) task.candidates.push_back(i);
  for (int u = 0; u < 1000; ++u) {
    std::vector<int> ids = task.candidates;
    std::shuffle(ids.begin(), ids.end(), gen);
    task.users.push_back({u, std::vector<int>(ids.begin(), ids.begin() + 30), ids[30]});
  }
  const EmbeddingStore store(random_unit_rows(n, 32, gen).cast<float>());
  const double hr = hr_at_k(task, store);
  const double p = static_cast<double>(task.cutoff) / n;
  const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(task.users.size()));
  const bool hr_ok = std::abs(hr - p) <= 3.0 * sigma;

  std::vector<int> labels;
  std::vector<double> equal;
  std::vector<double> independent;
  std::uniform_real_distribution<double> u;
  for (int i = 0; i < 10000; ++i) {
    labels.push_back(u(gen) < 0.4);
    equal.push_back(labels.back());
    independent.push_back(u(gen));
  }
  const double auc_equal = auc(equal, labels);
  const double auc_indep = auc(independent, labels);
  const bool ok = hr_ok && auc_equal == 1.0 && std::abs(auc_indep - 0.5) <= kAucHalfBand;
  return {ok, "HR random " + fmt(hr) + " (expect " + fmt(p) + " +/- " + fmt(3 * sigma, 3) + "), AUC equal " +
                  fmt(auc_equal) + ", AUC independent " + fmt(auc_indep)};
}

struct Snapshot {
  double genre = 0.0;
  double hit_rate = 0.0;
  double separation_auc = 0.0;
  double top1 = 0.0;
};

Snapshot measure(const app::Workspace& ws, TrainState& state, const RunConfig& cfg, bool with_top1) {
  const EmbeddingStore store = app::audio_embeddings(ws, state);
  Snapshot s;
  s.genre = app::genre_probe(store, ws, cfg.eval.probe);
  s.hit_rate = app::matching_hit_rate(store, ws, cfg.eval);
  s.separation_auc = distance_distribution(ws.prefs.analysis, store, cfg.eval.histogram_bins).separation_auc;
  if (with_top1) s.top1 = app::heldout_retrieval(ws, state, cfg.eval.retrieval_batch);
  return s;
}

std::vector<double> trace(const TrainLog& log) {
  std::vector<double> v;
  for (const StepRecord& r : log.steps) v.push_back(r.total);
  return v;
}

void report(int id, const std::string& name, const Outcome& o, Json& summary) {
  std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << o.detail << std::endl;
  summary.push_back({{"criterion", id}, {"name", name}, {"pass", o.pass}, {"detail", o.detail}});
}

template <typename F>
Outcome guarded(F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {false, std::string("error: ") + e.what()};
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string config;
  std::string workdir = "acceptance";
  std::vector<std::string> overrides;
  app.add_option("--config", config, "Desk configuration")->required();
  app.add_option("--workdir", workdir, "Scratch directory");
  app.add_option("--set", overrides, "Config override key=value");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  Json summary = Json::array();
  bool all = true;
  auto record = [&](int id, const std::string& name, const Outcome& o) {
    report(id, name, o, summary);
    all = all && o.pass;
  };

  record(1, "loss oracle equivalence", guarded(loss_oracle));
  record(2, "gradient correctness", guarded(gradient_check));
  record(3, "shape chain", guarded(shape_chain));

  const RunConfig cfg = cli::parse_config(fs::path(config), overrides);
  const auto progress = [](const char* stage) {
    return [stage](const StepRecord& r) {
      if (r.step % 100 == 0) std::cerr << stage << " step " << r.step << " loss " << r.total << '\n';
    };
  };

  std::optional<app::Workspace> ws;
  std::optional<TrainState> stage1;
  Snapshot s1;
  const Outcome c4 = guarded([&]() -> Outcome {
    const Corpus corpus = generate_corpus(cfg.data);
    ws = app::workspace_from_corpus(corpus, generate_preference_data(corpus, cfg.data), cfg.mel);
    const auto t0 = std::chrono::steady_clock::now();
    stage1 = app::run_pretrain(*ws, cfg, progress("pretrain"));
    const double elapsed = seconds_since(t0);
    s1 = measure(*ws, *stage1, cfg, true);
    const bool ok = cfg.pretrain.steps <= kMaxPretrainSteps && s1.top1 >= kMinTop1 && s1.genre >= kMinGenreAcc &&
                    elapsed <= kPretrainBudgetS;
    return {ok, "top-1 " + fmt(s1.top1) + " (>= " + fmt(kMinTop1) + "), genre ACC " + fmt(s1.genre) + " (>= " +
                    fmt(kMinGenreAcc) + "), " + std::to_string(cfg.pretrain.steps) + " steps in " + fmt(elapsed, 3) +
                    " s"};
  });
  record(4, "stage-1 learning", c4);

  std::map<Ablation, Snapshot> tuned;
  double finetune_s = 0.0;
  const Outcome c5 = guarded([&]() -> Outcome {
    if (!stage1) throw std::runtime_error("stage-1 checkpoint unavailable");
    const auto t0 = std::chrono::steady_clock::now();
    TrainState full = app::run_finetune(*ws, cfg, *stage1, Ablation::kNone, progress("finetune"));
    finetune_s = seconds_since(t0);
    tuned[Ablation::kNone] = measure(*ws, full, cfg, false);
    const Snapshot& s2 = tuned[Ablation::kNone];
    const double drop = s1.genre - s2.genre;
    const bool ok = s2.separation_auc > s1.separation_auc && s2.separation_auc >= kMinSeparationAuc &&
                    drop <= kMaxGenreDrop && finetune_s <= kFinetuneBudgetS;
    return {ok, "separation AUC " + fmt(s1.separation_auc) + " -> " + fmt(s2.separation_auc) + " (>= " +
                    fmt(kMinSeparationAuc) + "), genre ACC " + fmt(s1.genre) + " -> " + fmt(s2.genre) +
                    " (drop <= " + fmt(kMaxGenreDrop) + "), " + fmt(finetune_s, 3) + " s"};
  });
  record(5, "stage-2 preference adaptation", c5);

  const Outcome c6 = guarded([&]() -> Outcome {
    if (!tuned.count(Ablation::kNone)) throw std::runtime_error("full fine-tune unavailable");
    for (Ablation a : {Ablation::kCfPairs, Ablation::kNoText}) {
      TrainState s = app::run_finetune(*ws, cfg, *stage1, a, progress(to_string(a)));
      tuned[a] = measure(*ws, s, cfg, false);
    }
    const Snapshot& full = tuned[Ablation::kNone];
    const Snapshot& cf = tuned[Ablation::kCfPairs];
    const Snapshot& nt = tuned[Ablation::kNoText];
    const bool genre_ok = cf.genre < full.genre && nt.genre < full.genre;
    const bool hr_ok = full.hit_rate > s1.hit_rate && full.hit_rate > cf.hit_rate && full.hit_rate > nt.hit_rate;
    return {genre_ok && hr_ok, "genre ACC full " + fmt(full.genre) + ", cf_pairs " + fmt(cf.genre) + ", no_text " +
                                   fmt(nt.genre) + "; HR stage-1 " + fmt(s1.hit_rate) + ", full " +
                                   fmt(full.hit_rate) + ", cf_pairs " + fmt(cf.hit_rate) + ", no_text " +
                                   fmt(nt.hit_rate)};
  });
  record(6, "ablation directions", c6);

  record(7, "metric sanity", guarded(metric_sanity));

  record(8, "reproducibility and persistence", guarded([&]() -> Outcome {
    if (!ws || !stage1) throw std::runtime_error("workspace unavailable");
    RunConfig short_cfg = cfg;
    short_cfg.pretrain.steps = kReproSteps;
    short_cfg.pretrain.deterministic = true;
    const std::vector<double> a = trace(app::run_pretrain(*ws, short_cfg).history);
    const std::vector<double> b = trace(app::run_pretrain(*ws, short_cfg).history);
    const bool same_trace = a.size() == static_cast<std::size_t>(kReproSteps) && a == b;

    const fs::path path = fs::path(workdir) / "stage1.htcl";
    save_checkpoint(*stage1, path);
    TrainState loaded = load_checkpoint(path);
    const int probe = ws->prefs.holdout_songs.front();
    const RowVector before = audio_encode(ws->mels[static_cast<std::size_t>(probe)], stage1->params, stage1->model.audio);
    const RowVector after = audio_encode(ws->mels[static_cast<std::size_t>(probe)], loaded.params, loaded.model.audio);
    const bool same_embedding = before == after;
    return {same_trace && same_embedding, std::string("loss trace over ") + std::to_string(a.size()) + " steps " +
                                              (same_trace ? "bit-identical" : "differs") + ", reloaded embedding " +
                                              (same_embedding ? "bit-identical" : "differs")};
  }));

  std::ofstream(fs::path(workdir) / "acceptance.json") << summary.dump(2) << '\n';
  return all ? 0 : 1;
}
