/*
 * Copyright 2026 The stainvar Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Pipeline configuration: every tunable of the three training stages, the
// synthetic data and inference, with JSON round-tripping. Missing keys keep
// their defaults; unknown keys and type errors raise ConfigError naming the
// key path.

#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "stainvar/domain.hpp"
#include "stainvar/synthetic.hpp"
#include "stainvar/translator.hpp"
#include "stainvar/var_model.hpp"
#include "stainvar/var_train.hpp"
#include "stainvar/vqvae.hpp"

namespace stainvar {

// Every arm the ablation harness knows, in report order.
const std::vector<std::string>& ablation_arm_names();

struct AblationSettings {
  std::vector<std::uint64_t> seeds = {7, 8, 9};
  double misalignment_magnitude = 3.0;
  std::vector<std::string> arms = ablation_arm_names();
  // Named extra schedule arms, e.g. {"dense 1-8", [[1,1],...,[8,8]]}.
  std::vector<std::pair<std::string, ScaleSchedule>> schedules;
};

struct PipelineConfig {
  std::uint64_t seed = 7;
  DatasetSpec data;
  VqConfig vq;
  VqTrainConfig vq_train;
  int translator_width = 32;
  TranslatorTrainConfig translator_train;
  VarConfig var;  // vocab_size, channels and schedule follow `vq`
  VarTrainConfig var_train;
  LossWeights weights;
  SamplingStrategy sampling;
  AblationSettings ablation;

  // Desk-scale defaults: 64x64 images, 8x8 latent grid, dense 4..8 schedule.
  static PipelineConfig defaults();

  // Propagates shared values (weights, vocabulary, channels, schedule) into
  // the per-stage structs and validates everything. Throws ConfigError.
  void finalize();

  Extent latent_grid() const;
};

nlohmann::json to_json(const PipelineConfig& config);
// Overlays `j` onto the defaults, then finalizes.
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);

nlohmann::json schedule_to_json(const ScaleSchedule& s);
ScaleSchedule schedule_from_json(const nlohmann::json& j, const std::string& key);

}  // namespace stainvar
