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

// JSON mapping of every configuration struct. Readers reject unknown keys and
// type mismatches with a ConfigError naming the dotted key path.

#pragma once

#include <nlohmann/json.hpp>

#include <string>

#include "htcl/contrastive_core.hpp"
#include "htcl/encoders.hpp"
#include "htcl/eval.hpp"
#include "htcl/mel_frontend.hpp"
#include "htcl/synth_data.hpp"
#include "htcl/training.hpp"

namespace htcl {

using Json = nlohmann::ordered_json;

/// Complete configuration tree of a run.
struct RunConfig {
  GeneratorConfig data;
  MelConfig mel;
  ModelConfig model;
  LossConfig loss;
  TrainConfig pretrain = TrainConfig::pretrain_defaults();
  TrainConfig finetune = TrainConfig::finetune_defaults();
  EvalConfig eval;

  void validate() const;
};

Json to_json(const GeneratorConfig& c);
Json to_json(const MelConfig& c);
Json to_json(const AudioEncoderConfig& c);
Json to_json(const TextEncoderConfig& c);
Json to_json(const ModelConfig& c);
Json to_json(const LossConfig& c);
Json to_json(const TrainConfig& c);
Json to_json(const EvalConfig& c);
Json to_json(const RunConfig& c);

void from_json(const Json& j, GeneratorConfig& c, const std::string& path = "data");
void from_json(const Json& j, MelConfig& c, const std::string& path = "mel");
void from_json(const Json& j, AudioEncoderConfig& c, const std::string& path = "audio_encoder");
void from_json(const Json& j, TextEncoderConfig& c, const std::string& path = "text_encoder");
void from_json(const Json& j, ModelConfig& c, const std::string& path = "model");
void from_json(const Json& j, LossConfig& c, const std::string& path = "loss");
void from_json(const Json& j, TrainConfig& c, const std::string& path);
void from_json(const Json& j, EvalConfig& c, const std::string& path = "eval");
void from_json(const Json& j, RunConfig& c);

}  // namespace htcl
