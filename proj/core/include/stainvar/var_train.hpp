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

// Teacher-forced training of the autoregressive transformer together with a
// fine-tuned copy of the IHC decoder.

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

#include "stainvar/nets.hpp"
#include "stainvar/translator.hpp"
#include "stainvar/var_model.hpp"
#include "stainvar/vqvae.hpp"

namespace stainvar {

struct VarData {
  torch::Tensor x_ihc;                   // [N,3,S,S]
  torch::Tensor f_pred;                  // [N,C,H,W] translator output
  std::vector<torch::Tensor> gt_tokens;  // per scale [N,h_k,w_k]
};

// Runs the frozen stage-(a)/(b) models: tokens of the IHC targets and the
// translated H&E features.
VarData prepare_var_data(VqModelImpl& vq_he, VqModelImpl& vq_ihc, TranslatorNetImpl& translator,
                         const torch::Tensor& x_he, const torch::Tensor& x_ihc);

struct VarTrainConfig {
  int epochs = 40;
  int steps = -1;
  int batch_size = 4;
  double lr = 1e-4;
  double decoder_lr = 1e-4;
  LossWeights weights;
  bool use_pixel = true;
  bool use_adv = true;
  bool finetune_decoder = true;
  int adv_start_step = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct VarTrainResult {
  LossCurve curve;
  std::vector<double> initial_scale_ce;  // eval mode, whole training set
  std::vector<double> final_scale_ce;
  int steps = 0;
};

// Per-scale teacher-forced CE over the whole dataset, eval mode.
std::vector<double> evaluate_scale_ce(VarTransformerImpl& model, const VqModelImpl& vq_ihc,
                                      const VarData& data);

// Decoder input from per-scale logits: hard tokens in the forward pass,
// softmax-weighted codewords in the backward pass.
torch::Tensor straight_through_features(const std::vector<torch::Tensor>& logits,
                                        const torch::Tensor& codebook,
                                        const rvq::ProjectionsImpl& proj,
                                        const ScaleSchedule& schedule, Extent grid);

// `frozen` lists modules that must not change (both encoders, the
// translator, the IHC quantizer); checked by digest after training.
VarTrainResult train_var(VarTransformerImpl& model, DecoderNetImpl& decoder_ft,
                         DiscriminatorImpl& disc, VqModelImpl& vq_ihc, const VarData& data,
                         const VarTrainConfig& config,
                         const std::vector<const torch::nn::Module*>& frozen,
                         const ProgressFn& progress = {});

}  // namespace stainvar
