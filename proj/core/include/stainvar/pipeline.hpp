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

// Three-stage pipeline: stage runners, inference, evaluation and the
// checkpoint chain that binds later stages to the exact weights of earlier
// ones.

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "stainvar/checkpoint.hpp"
#include "stainvar/config.hpp"
#include "stainvar/scoring.hpp"
#include "stainvar/synthetic.hpp"

namespace stainvar {

struct VqBundle {
  VqModel model{nullptr};
  Discriminator disc{nullptr};
};

// Switches used by the ablation arms; defaults run the full method.
struct StageOptions {
  bool use_lsa = true;
  bool use_isa = true;
  bool finetune_decoder = true;
  bool use_adv = true;
  bool use_pixel = true;
  bool use_global_context = true;
  bool use_start_map = true;
};

struct VarStage {
  VarTransformer var{nullptr};
  DecoderNet decoder_ft{nullptr};
  Discriminator disc{nullptr};
  VarTrainResult result;
};

struct PipelineModels {
  PipelineConfig config;
  VqBundle he;
  VqBundle ihc;
  TranslatorNet translator{nullptr};
  VarTransformer var{nullptr};
  DecoderNet decoder_ft{nullptr};
};

// Seed of one training stage derived from the run seed; stage ids are
// 1 (H&E VQ), 2 (IHC VQ), 3 (translator) and 4 (VAR).
std::uint64_t stage_seed(std::uint64_t seed, int stage) noexcept;

// [N,3,S,S] from the H&E (ihc = false) or IHC side of each pair.
torch::Tensor stack_images(const std::vector<SyntheticPair>& pairs, bool ihc);

VqBundle make_vq(const PipelineConfig& config, std::uint64_t seed);
VqBundle train_vq_stage(const PipelineConfig& config, const torch::Tensor& images,
                        std::uint64_t seed, VqTrainResult* result = nullptr,
                        const ProgressFn& progress = {});

TranslatorNet train_translator_stage(const PipelineConfig& config, VqBundle& he, VqBundle& ihc,
                                     const torch::Tensor& x_he, const torch::Tensor& x_ihc,
                                     const StageOptions& options, std::uint64_t seed,
                                     TranslatorTrainResult* result = nullptr,
                                     const ProgressFn& progress = {});

VarStage train_var_stage(const PipelineConfig& config, VqBundle& he, VqBundle& ihc,
                         TranslatorNetImpl& translator, const torch::Tensor& x_he,
                         const torch::Tensor& x_ihc, const StageOptions& options,
                         std::uint64_t seed, const ProgressFn& progress = {});

// Full inference: H&E encode and quantize, translate, start map and global
// context, scale-by-scale token generation, fine-tuned decode. Optionally
// returns the generated per-scale tokens.
torch::Tensor infer_batch(PipelineModels& models, const torch::Tensor& x_he,
                          const SamplingStrategy& strategy, std::uint64_t seed,
                          std::vector<torch::Tensor>* tokens = nullptr);

Image infer(const Image& x_he, PipelineModels& models, const SamplingStrategy& strategy = {},
            std::uint64_t seed = 0);

// Translator output decoded by the frozen IHC decoder (no autoregression).
torch::Tensor translate_decode_batch(PipelineModels& models, const torch::Tensor& x_he);

struct ImageQuality {
  std::vector<double> psnr;
  std::vector<double> ssim;
  std::vector<double> proxy;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_proxy = 0.0;
};

ImageQuality image_quality(const torch::Tensor& pred, const torch::Tensor& gt);
ImageQuality image_quality(const std::vector<Image>& pred, const std::vector<Image>& gt);

// Scores predicted IHC images by measuring DAB inside the generator's nuclei,
// with the generator's own counts as ground truth.
std::vector<PatchRow> patch_rows_from_images(const std::vector<SyntheticPair>& pairs,
                                             const std::vector<Image>& predicted,
                                             const DabThresholds& thresholds);

// Reference HER2 class of a patch: 0 below 10% positive nuclei, otherwise
// the most populated positive bin (ties toward the stronger bin).
int reference_her2_score(const NucleiCounts& counts);

// --- persistence -----------------------------------------------------------

inline constexpr const char* kVqHeFile = "vq_he.ckpt";
inline constexpr const char* kVqIhcFile = "vq_ihc.ckpt";
inline constexpr const char* kTranslatorFile = "translator.ckpt";
inline constexpr const char* kVarFile = "var.ckpt";

Checkpoint vq_checkpoint(const VqBundle& vq, const PipelineConfig& config,
                         const std::string& modality);
// Throws FormatError when the checkpoint is not a VQ stage checkpoint.
VqBundle vq_from_checkpoint(const Checkpoint& ck, PipelineConfig* config = nullptr);

Checkpoint translator_checkpoint(TranslatorNetImpl& translator, const VqBundle& he,
                                 const VqBundle& ihc, const PipelineConfig& config);
Checkpoint var_checkpoint(const VarStage& stage, TranslatorNetImpl& translator,
                          const VqBundle& he, const VqBundle& ihc, const PipelineConfig& config);

// Loads whatever stages exist under `dir`. Missing files throw
// MissingPrerequisiteError naming the stage; checkpoints whose recorded
// upstream hashes disagree with the loaded upstream weights throw
// HashMismatchError.
VqBundle load_vq_stage(const std::filesystem::path& dir, const std::string& modality,
                       PipelineConfig* config = nullptr);
TranslatorNet load_translator_stage(const std::filesystem::path& dir, const VqBundle& he,
                                    const VqBundle& ihc);
PipelineModels load_pipeline(const std::filesystem::path& dir);

// Reproducibility record: command, config, seeds, checkpoint file digests and
// the source revision.
nlohmann::json make_manifest(const std::string& command, const PipelineConfig& config,
                             const std::map<std::string, std::filesystem::path>& artifacts);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace stainvar
