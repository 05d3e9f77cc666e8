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

// Cross-modal latent translator: maps the aggregated quantized H&E features
// into the continuous IHC feature space.

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

#include "stainvar/domain.hpp"
#include "stainvar/nets.hpp"
#include "stainvar/vqvae.hpp"

namespace stainvar {

using TranslatorNet = LatentUNet;
using TranslatorNetImpl = LatentUNetImpl;

// Eval mode; throws ShapeError when the channel count does not match.
FeatureMap translate(const FeatureMap& fhat_he, TranslatorNetImpl& net);

// Latent alignment: mean |pred - gt|.
torch::Tensor lsa_loss(const torch::Tensor& pred, const torch::Tensor& gt);
double lsa_loss(const FeatureMap& pred, const FeatureMap& gt);

// Image alignment: mean |x_ihc - decoded_pred|.
torch::Tensor isa_loss(const torch::Tensor& x_ihc, const torch::Tensor& decoded_pred);
double isa_loss(const Image& x_ihc, const Image& decoded_pred);

struct TranslatorData {
  torch::Tensor fhat_he;  // [N,C,H,W] aggregate of the frozen H&E quantizer
  torch::Tensor f_gt;     // [N,C,H,W] frozen IHC encoder on the registered target
  torch::Tensor x_ihc;    // [N,3,S,S]
};

// Runs both frozen VQ models over paired images.
TranslatorData prepare_translator_data(VqModelImpl& vq_he, VqModelImpl& vq_ihc,
                                       const torch::Tensor& x_he, const torch::Tensor& x_ihc);

struct TranslatorTrainConfig {
  int epochs = 10;
  int steps = -1;
  int batch_size = 4;
  double lr = 1e-4;
  double lambda_trans = 3.0;
  bool use_lsa = true;
  bool use_isa = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TranslatorTrainResult {
  LossCurve curve;
  int steps = 0;
};

// Optimizes LSA + lambda_trans * ISA. Gradients pass through the frozen IHC
// decoder into the translator only. `frozen` lists every module whose
// parameters must not move; their digests are compared before and after and
// a FrozenDriftError is raised on any change.
TranslatorTrainResult train_translator(TranslatorNetImpl& net, DecoderNetImpl& frozen_decoder,
                                       const TranslatorData& data,
                                       const TranslatorTrainConfig& config,
                                       const std::vector<const torch::nn::Module*>& frozen,
                                       const ProgressFn& progress = {});

// Digest of every listed module, in order.
std::vector<std::string> frozen_digests(const std::vector<const torch::nn::Module*>& modules);
// Throws FrozenDriftError naming the first module whose digest changed.
void require_unchanged(const std::vector<const torch::nn::Module*>& modules,
                       const std::vector<std::string>& before);

}  // namespace stainvar
