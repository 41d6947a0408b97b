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

#include "htcl/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "htcl/app.hpp"
#include "htcl/error.hpp"

namespace htcl::cli {

namespace fs = std::filesystem;

void apply_override(Json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' must look like key.path=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json* node = &tree;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown configuration key " + key);
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  *node = std::move(value);
}

RunConfig parse_config(const std::optional<fs::path>& file, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot open config file " + file->string());
    Json j = Json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file " + file->string() + " is not valid JSON");
    if (!j.is_null()) from_json(j, cfg);
  }
  if (!overrides.empty()) {
    Json tree = to_json(cfg);
    for (const std::string& o : overrides) apply_override(tree, o);
    RunConfig merged;
    from_json(tree, merged);
    cfg = merged;
  }
  cfg.validate();
  return cfg;
}

Json RunManifest::to_json() const {
  return {{"command", command}, {"config", config},   {"inputs", inputs},
          {"outputs", outputs}, {"seed", seed}, {"artifact_hashes", artifact_hashes}};
}

void RunManifest::write(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write run manifest: " + path.string());
  out << to_json().dump(2) << '\n';
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

namespace {

struct Common {
  std::optional<fs::path> config;
  std::vector<std::string> overrides;
};

std::string abs_path(const fs::path& p) { return fs::absolute(p).lexically_normal().string(); }

std::optional<fs::path> cache_dir() {
  const char* v = std::getenv(kCacheEnv);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return fs::path(v);
}

StepCallback progress(const char* stage, int total) {
  return [stage, total](const StepRecord& r) {
    if (r.step == 1 || r.step % 50 == 0 || r.step == total) {
      std::cerr << stage << " step " << r.step << "/" << total << " loss " << r.total << " (" << std::fixed
                << std::setprecision(1) << r.wall_time_s << "s)" << std::defaultfloat << std::setprecision(6) << '\n';
    }
  };
}

RunManifest manifest_for(const std::string& command, const RunConfig& cfg, std::uint64_t seed) {
  RunManifest m;
  m.command = command;
  m.config = to_json(cfg);
  m.seed = seed;
  return m;
}

void hash_manifest_inputs(RunManifest& m, const fs::path& data_dir) {
  m.artifact_hashes["manifest.tsv"] = file_hash(data_dir / "manifest.tsv");
  m.artifact_hashes["triplets.tsv"] = file_hash(data_dir / "triplets.tsv");
}

int cmd_gen_data(const Common& c, const fs::path& out) {
  const RunConfig cfg = parse_config(c.config, c.overrides);
  RunManifest m = manifest_for("gen-data", cfg, cfg.data.seed);
  m.outputs["dir"] = abs_path(out);
  m.write(out / "run_manifest.json");
  const Corpus corpus = generate_corpus(cfg.data);
  const PreferenceData prefs = generate_preference_data(corpus, cfg.data);
  write_corpus(out, corpus);
  write_preference_data(out, prefs);
  std::cerr << "gen-data: " << corpus.size() << " songs, " << prefs.triplets.size() << " triplets, "
            << prefs.matching.size() << " matching users -> " << out.string() << '\n';
  return kExitOk;
}

int cmd_pretrain(const Common& c, const fs::path& data, const fs::path& out) {
  const RunConfig cfg = parse_config(c.config, c.overrides);
  RunManifest m = manifest_for("pretrain", cfg, cfg.pretrain.seed);
  m.inputs["data"] = abs_path(data);
  m.outputs["checkpoint"] = abs_path(out / "checkpoint.htcl");
  m.outputs["train_log"] = abs_path(out / "train_log.tsv");
  hash_manifest_inputs(m, data);
  m.write(out / "run_manifest.json");
  const app::Workspace ws = app::load_workspace(data, cfg.mel, cache_dir());
  const TrainState state = app::run_pretrain(ws, cfg, progress("pretrain", cfg.pretrain.steps));
  save_checkpoint(state, out / "checkpoint.htcl");
  app::write_train_log(out / "train_log.tsv", state.history);
  state.vocab.save(out / "vocab.tsv");
  return kExitOk;
}

int cmd_finetune(const Common& c, const fs::path& data, const fs::path& init, const fs::path& out,
                 const std::string& ablation_name) {
  const RunConfig cfg = parse_config(c.config, c.overrides);
  const Ablation ablation = parse_ablation(ablation_name);
  RunManifest m = manifest_for("finetune", cfg, cfg.finetune.seed);
  m.inputs["data"] = abs_path(data);
  m.inputs["init"] = abs_path(init);
  m.inputs["ablation"] = to_string(ablation);
  m.outputs["checkpoint"] = abs_path(out / "checkpoint.htcl");
  m.outputs["train_log"] = abs_path(out / "train_log.tsv");
  hash_manifest_inputs(m, data);
  m.artifact_hashes["init"] = file_hash(init);
  m.write(out / "run_manifest.json");
  TrainState start = load_checkpoint(init, &cfg.model);
  const app::Workspace ws = app::load_workspace(data, cfg.mel, cache_dir());
  const TrainState state =
      app::run_finetune(ws, cfg, std::move(start), ablation, progress("finetune", cfg.finetune.steps));
  save_checkpoint(state, out / "checkpoint.htcl");
  app::write_train_log(out / "train_log.tsv", state.history);
  return kExitOk;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const fs::path& data, const fs::path& report) {
  if (checkpoint.empty()) throw ConfigError("eval: --checkpoint is required");
  const RunConfig cfg = parse_config(c.config, c.overrides);
  RunManifest m = manifest_for("eval", cfg, cfg.eval.probe.seed);
  m.inputs["checkpoint"] = abs_path(checkpoint);
  m.inputs["data"] = abs_path(data);
  m.outputs["report"] = abs_path(report);
  m.artifact_hashes["checkpoint"] = file_hash(checkpoint);
  hash_manifest_inputs(m, data);
  const fs::path dir = fs::absolute(report).parent_path();
  m.write(dir / (report.stem().string() + ".manifest.json"));
  TrainState state = load_checkpoint(checkpoint);
  const app::Workspace ws = app::load_workspace(data, cfg.mel, cache_dir());
  const app::MetricReport metrics = app::evaluate(ws, state, cfg.eval);
  Json out = {{"metrics", app::to_json(metrics)},
              {"run", {{"checkpoint", abs_path(checkpoint)},
                       {"data", abs_path(data)},
                       {"stage", to_string(state.train.stage)},
                       {"ablation", to_string(state.train.ablation)},
                       {"seed", cfg.eval.probe.seed}}}};
  std::ofstream f(report);
  if (!f) throw DataError("cannot write report " + report.string());
  f << out.dump(2) << '\n';
  std::cout << out["metrics"].dump(2) << '\n';
  return kExitOk;
}

app::Workspace analysis_workspace(const RunConfig& cfg, const fs::path& data, const fs::path& pairs,
                                  std::vector<AnalysisPair>& pair_rows) {
  pair_rows = read_analysis_pairs(pairs);
  return app::load_workspace(data, cfg.mel, cache_dir());
}

SeparationReport analyze_one(const app::Workspace& ws, const std::string& checkpoint,
                             const std::vector<AnalysisPair>& pairs, int bins, const fs::path& out,
                             const std::string& label) {
  TrainState state = load_checkpoint(checkpoint);
  const EmbeddingStore store = app::audio_embeddings(ws, state);
  const SeparationReport rep = distance_distribution(pairs, store, bins);
  write_histogram_csv(out / (label + "_positive.csv"), rep, true);
  write_histogram_csv(out / (label + "_negative.csv"), rep, false);
  return rep;
}

int cmd_analyze(const Common& c, const std::string& checkpoint, const std::string& baseline, const fs::path& pairs,
                std::string data, const fs::path& out, const std::string& mode) {
  if (checkpoint.empty()) throw ConfigError("analyze: --checkpoint is required");
  if (mode != "single" && mode != "compare") throw ConfigError("analyze: --mode must be single or compare");
  if (mode == "compare" && baseline.empty()) throw ConfigError("analyze: --mode=compare needs --baseline");
  if (data.empty()) data = fs::absolute(pairs).parent_path().string();
  const RunConfig cfg = parse_config(c.config, c.overrides);
  RunManifest m = manifest_for("analyze", cfg, 0);
  m.inputs["checkpoint"] = abs_path(checkpoint);
  if (!baseline.empty()) m.inputs["baseline"] = abs_path(baseline);
  m.inputs["pairs"] = abs_path(pairs);
  m.inputs["data"] = abs_path(data);
  m.outputs["dir"] = abs_path(out);
  m.artifact_hashes["checkpoint"] = file_hash(checkpoint);
  if (!baseline.empty()) m.artifact_hashes["baseline"] = file_hash(baseline);
  m.artifact_hashes["pairs"] = file_hash(pairs);
  m.write(out / "run_manifest.json");

  std::vector<AnalysisPair> rows;
  const app::Workspace ws = analysis_workspace(cfg, data, pairs, rows);
  const int bins = cfg.eval.histogram_bins;
  Json summary;
  const SeparationReport main = analyze_one(ws, checkpoint, rows, bins, out, "checkpoint");
  summary["checkpoint"] = app::to_json(main);
  if (!baseline.empty()) {
    const SeparationReport base = analyze_one(ws, baseline, rows, bins, out, "baseline");
    summary["baseline"] = app::to_json(base);
    summary["delta"] = {{"mean_gap", main.mean_gap - base.mean_gap},
                        {"separation_auc", main.separation_auc - base.separation_auc}};
  }
  std::ofstream f(out / "separation.json");
  if (!f) throw DataError("cannot write " + (out / "separation.json").string());
  f << summary.dump(2) << '\n';
  std::cout << "separation_auc " << main.separation_auc << " mean_gap " << main.mean_gap << '\n';
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App cli{"htcl: two-stage audio-text contrastive training for music recommendation"};
  cli.require_subcommand(1);
  Common common;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON configuration file");
    sub->add_option("--set", common.overrides, "Override a config key, e.g. loss.temperature=0.05");
  };

  fs::path out;
  fs::path data;
  fs::path init;
  fs::path report;
  fs::path pairs;
  std::string checkpoint;
  std::string baseline;
  std::string data_opt;
  std::string ablation = "none";
  std::string mode = "single";

  auto* gen = cli.add_subcommand("gen-data", "Generate the synthetic corpus and preference files");
  add_common(gen);
  gen->add_option("--out", out, "Output directory")->required();

  auto* pre = cli.add_subcommand("pretrain", "Stage-1 audio-text contrastive pre-training");
  add_common(pre);
  pre->add_option("--data", data, "Directory written by gen-data")->required();
  pre->add_option("--out", out, "Output directory")->required();

  auto* fine = cli.add_subcommand("finetune", "Stage-2 preference fine-tuning");
  add_common(fine);
  fine->add_option("--data", data, "Directory written by gen-data")->required();
  fine->add_option("--init", init, "Stage-1 checkpoint")->required();
  fine->add_option("--out", out, "Output directory")->required();
  fine->add_option("--ablation", ablation, "none | cf_pairs | no_text");

  auto* ev = cli.add_subcommand("eval", "Downstream metrics for a checkpoint");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate");
  ev->add_option("--data", data, "Directory written by gen-data")->required();
  ev->add_option("--report", report, "Metric report path (JSON)")->required();

  auto* an = cli.add_subcommand("analyze", "Anchor-positive / anchor-negative similarity distributions");
  add_common(an);
  an->add_option("--checkpoint", checkpoint, "Checkpoint to analyze");
  an->add_option("--baseline", baseline, "Second checkpoint to compare against");
  an->add_option("--pairs", pairs, "analysis_pairs.tsv")->required();
  an->add_option("--data", data_opt, "Data directory (defaults to the folder holding --pairs)");
  an->add_option("--out", out, "Output directory")->required();
  an->add_option("--mode", mode, "single | compare");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    cli.exit(e);
    return kExitConfig;
  }

  const std::string command = cli.get_subcommands().front()->get_name();
  try {
    if (command == "gen-data") return cmd_gen_data(common, out);
    if (command == "pretrain") return cmd_pretrain(common, data, out);
    if (command == "finetune") return cmd_finetune(common, data, init, out, ablation);
    if (command == "eval") return cmd_eval(common, checkpoint, data, report);
    if (!baseline.empty() && mode == "single") mode = "compare";
    return cmd_analyze(common, checkpoint, baseline, pairs, data_opt, out, mode);
  } catch (const ConfigError& e) {
    std::cerr << command << ": configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << command << ": numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << command << ": data error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << command << ": data error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace htcl::cli
