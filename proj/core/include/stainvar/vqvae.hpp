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

// Modality-specific VQ-VAE: encoder, decoder, multi-scale residual quantizer
// with an EMA codebook, and the composite reconstruction objective.

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stainvar/domain.hpp"
#include "stainvar/nets.hpp"
#include "stainvar/rvq.hpp"

namespace stainvar {

struct VqConfig {
  NetConfig net;
  int codebook_size = 4096;
  ScaleSchedule schedule = ScaleSchedule::default_schedule();
  double ema_decay = 0.99;

  void validate() const;
};

struct VqForward {
  torch::Tensor features;    // f = E(x)
  rvq::BatchEncoding encoding;
  torch::Tensor decoder_input;  // value of f_hat, straight-through gradient to f
  torch::Tensor reconstruction;
};

class VqModelImpl : public torch::nn::Module {
 public:
  explicit VqModelImpl(const VqConfig& config);

  VqForward forward(const torch::Tensor& x);

  // Quantized reconstruction only, no gradient bookkeeping.
  torch::Tensor reconstruct(const torch::Tensor& x);

  // EMA step over every codeword selected in `encoding`. Rows that were not
  // selected keep their value and statistics.
  void ema_update(const rvq::BatchEncoding& encoding);

  // Re-seeds codewords whose usage count is zero from `pool` ([M,C]) plus a
  // small jitter and clears the usage counters. Returns the number replaced.
  int restart_dead_codes(const torch::Tensor& pool);

  Codebook codebook_value() const;
  std::uint64_t codebook_hash() const;

  const VqConfig& config() const noexcept { return config_; }
  Extent latent_extent(Extent image) const;

  EncoderNet encoder{nullptr};
  DecoderNet decoder{nullptr};
  rvq::Projections projections{nullptr};
  torch::Tensor codebook;    // [V,C]
  torch::Tensor ema_count;   // [V]
  torch::Tensor ema_sum;     // [V,C]
  torch::Tensor usage;       // [V], selections since the last restart

 private:
  VqConfig config_;
};
TORCH_MODULE(VqModel);

// Feature map of one image, eval mode. Throws NumericError on non-finite
// activations.
FeatureMap encode_image(const Image& x, EncoderNetImpl& encoder);

// Throws ShapeError when the channel count disagrees with the decoder.
Image decode_features(const FeatureMap& fhat, DecoderNetImpl& decoder);

struct AdversarialTerms {
  torch::Tensor generator;      // mean softplus(-D(fake)), gradient into fake
  torch::Tensor discriminator;  // real + fake parts, fake detached
  torch::Tensor disc_real;
  torch::Tensor disc_fake;
};

// Non-saturating logistic GAN terms averaged over the discriminator heads.
AdversarialTerms adversarial_losses(const torch::Tensor& real, const torch::Tensor& fake,
                                    DiscriminatorImpl& disc);
torch::Tensor generator_adversarial_loss(const torch::Tensor& fake, DiscriminatorImpl& disc);
torch::Tensor discriminator_adversarial_loss(const torch::Tensor& real,
                                             const torch::Tensor& fake,
                                             DiscriminatorImpl& disc);

struct VqLossTerms {
  torch::Tensor rec;
  torch::Tensor feat;
  torch::Tensor perceptual;
  torch::Tensor adv;
  torch::Tensor total;
};

// Throws ShapeError on disagreeing shapes.
VqLossTerms vq_loss_terms(const torch::Tensor& x, const torch::Tensor& xhat,
                          const torch::Tensor& f, const torch::Tensor& fhat,
                          DiscriminatorImpl& disc, const LossWeights& weights);

struct VqLossReport {
  double rec = 0.0;
  double feat = 0.0;
  double perceptual = 0.0;
  double adv = 0.0;
  double total = 0.0;
};

VqLossReport vq_loss(const Image& x, const Image& xhat, const FeatureMap& f,
                     const FeatureMap& fhat, DiscriminatorImpl& disc,
                     const LossWeights& weights);

// Per-epoch means of named loss terms.
struct LossCurve {
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;

  void write_csv(const std::string& path) const;
};

using ProgressFn = std::function<void(const std::string&)>;

struct VqTrainConfig {
  int epochs = 20;
  // When >= 0, run exactly this many optimizer steps instead of `epochs`.
  int steps = -1;
  int batch_size = 4;
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  std::uint64_t seed = 0;
  int restart_interval = 20;  // 0 disables dead-code restarts
  int adv_start_step = 0;
  LossWeights weights;

  void validate() const;
};

struct VqTrainResult {
  LossCurve curve;
  // Per-step reconstruction loss, for convergence checks.
  std::vector<double> step_rec;
  int steps = 0;
};

// Trains in place. images: [N,3,S,S] in [0,1]. Throws NumericError when the
// total loss becomes non-finite.
VqTrainResult train_vqvae(VqModelImpl& model, DiscriminatorImpl& disc, const torch::Tensor& images,
                          const VqTrainConfig& config, const ProgressFn& progress = {});

}  // namespace stainvar
