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

// Convolutional building blocks: VQ-VAE encoder/decoder, the patch
// discriminator, and the latent-space U-Net used by the translator.

#pragma once

#include <torch/torch.h>

#include <vector>

namespace stainvar {

struct NetConfig {
  int base_channels = 64;
  int latent_channels = 32;
  // Each block halves the resolution; patch size is 2^downsample_blocks.
  int downsample_blocks = 4;
  int max_channel_mult = 4;
  int res_blocks = 1;
  int groups = 8;
  double dropout = 0.5;
  int disc_channels = 64;

  int patch_size() const noexcept { return 1 << downsample_blocks; }
  void validate() const;
};

// Group count that divides `channels`, at most `preferred`.
int group_count(int channels, int preferred);

class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(int channels, int groups, double dropout);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::Dropout dropout_{nullptr};
};
TORCH_MODULE(ResBlock);

// Image [N,3,S,S] -> features [N,C,S/p,S/p].
class EncoderNetImpl : public torch::nn::Module {
 public:
  explicit EncoderNetImpl(const NetConfig& config);
  torch::Tensor forward(const torch::Tensor& x);

  int latent_channels() const noexcept { return latent_channels_; }
  int patch_size() const noexcept { return patch_size_; }

 private:
  int latent_channels_;
  int patch_size_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(EncoderNet);

// Features [N,C,h,w] -> image [N,3,h*p,w*p] in [0,1] (sigmoid output).
class DecoderNetImpl : public torch::nn::Module {
 public:
  explicit DecoderNetImpl(const NetConfig& config);
  torch::Tensor forward(const torch::Tensor& f);

  int latent_channels() const noexcept { return latent_channels_; }
  int patch_size() const noexcept { return patch_size_; }

 private:
  int latent_channels_;
  int patch_size_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(DecoderNet);

struct DiscriminatorOutput {
  std::vector<torch::Tensor> features;  // per layer activations
  std::vector<torch::Tensor> logits;    // one logit map per layer
};

// Three-layer patch discriminator. Every intermediate feature map feeds its
// own 1x1 logit head; losses average over the heads.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(int channels, int groups = 8);
  DiscriminatorOutput forward(const torch::Tensor& x);

 private:
  std::vector<torch::nn::Sequential> layers_;
  std::vector<torch::nn::Conv2d> heads_;
};
TORCH_MODULE(Discriminator);

// Latent U-Net: two down and two up levels with skip connections. No identity
// path from input to output, since source and target latents live in
// unrelated spaces.
class LatentUNetImpl : public torch::nn::Module {
 public:
  LatentUNetImpl(int channels, int width, int groups);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential in_{nullptr}, down1_{nullptr}, down2_{nullptr};
  torch::nn::Sequential up1_{nullptr}, up2_{nullptr};
  torch::nn::Conv2d out_{nullptr};
};
TORCH_MODULE(LatentUNet);

// Number of scalar parameters.
std::int64_t parameter_count(const torch::nn::Module& module);

// Puts a module in eval mode for the lifetime of the guard.
class ScopedEval {
 public:
  explicit ScopedEval(torch::nn::Module& module) : module_(module), was_training_(module.is_training()) {
    module_.eval();
  }
  ~ScopedEval() { module_.train(was_training_); }
  ScopedEval(const ScopedEval&) = delete;
  ScopedEval& operator=(const ScopedEval&) = delete;

 private:
  torch::nn::Module& module_;
  bool was_training_;
};

// Disables gradients on every parameter for the lifetime of the guard and
// restores the previous flags afterwards.
class ScopedFreeze {
 public:
  explicit ScopedFreeze(torch::nn::Module& module);
  ~ScopedFreeze();
  ScopedFreeze(const ScopedFreeze&) = delete;
  ScopedFreeze& operator=(const ScopedFreeze&) = delete;

 private:
  std::vector<std::pair<torch::Tensor, bool>> saved_;
};

}  // namespace stainvar
