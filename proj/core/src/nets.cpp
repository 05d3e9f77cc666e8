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

#include "stainvar/nets.hpp"

#include <algorithm>

#include "stainvar/error.hpp"

namespace stainvar {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

void NetConfig::validate() const {
  if (base_channels < 1 || latent_channels < 1 || disc_channels < 1) {
    throw InvalidArgument("network widths must be positive");
  }
  if (downsample_blocks < 1 || downsample_blocks > 6) {
    throw InvalidArgument("downsample_blocks must be in [1,6]");
  }
  if (max_channel_mult < 1 || res_blocks < 0 || groups < 1) {
    throw InvalidArgument("invalid network multipliers");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("dropout must be in [0,1)");
}

int group_count(int channels, int preferred) {
  int g = std::min(preferred, channels);
  while (g > 1 && channels % g != 0) --g;
  return std::max(g, 1);
}

std::int64_t parameter_count(const torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

ScopedFreeze::ScopedFreeze(torch::nn::Module& module) {
  for (auto& p : module.parameters()) {
    saved_.emplace_back(p, p.requires_grad());
    p.set_requires_grad(false);
  }
}

ScopedFreeze::~ScopedFreeze() {
  for (auto& [p, flag] : saved_) p.set_requires_grad(flag);
}

namespace {

nn::Conv2d conv(int in, int out, int kernel, int stride = 1, int padding = -1) {
  if (padding < 0) padding = kernel / 2;
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding));
}

nn::GroupNorm norm(int channels, int groups) {
  return nn::GroupNorm(nn::GroupNormOptions(group_count(channels, groups), channels));
}

int width_at(const NetConfig& c, int level) {
  return c.base_channels * std::min(1 << level, c.max_channel_mult);
}

}  // namespace

ResBlockImpl::ResBlockImpl(int channels, int groups, double dropout) {
  norm1_ = register_module("norm1", norm(channels, groups));
  conv1_ = register_module("conv1", conv(channels, channels, 3));
  norm2_ = register_module("norm2", norm(channels, groups));
  dropout_ = register_module("dropout", nn::Dropout(nn::DropoutOptions(dropout)));
  conv2_ = register_module("conv2", conv(channels, channels, 3));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x) {
  auto h = conv1_(torch::silu(norm1_(x)));
  h = conv2_(dropout_(torch::silu(norm2_(h))));
  return x + h;
}

EncoderNetImpl::EncoderNetImpl(const NetConfig& c)
    : latent_channels_(c.latent_channels), patch_size_(c.patch_size()) {
  c.validate();
  nn::Sequential seq;
  seq->push_back(conv(3, c.base_channels, 3));
  int ch = c.base_channels;
  for (int i = 0; i < c.downsample_blocks; ++i) {
    const int out = width_at(c, i + 1);
    seq->push_back(conv(ch, out, 4, 2, 1));
    seq->push_back(norm(out, c.groups));
    seq->push_back(nn::SiLU());
    ch = out;
  }
  for (int i = 0; i < c.res_blocks; ++i) seq->push_back(ResBlock(ch, c.groups, 0.0));
  seq->push_back(conv(ch, c.latent_channels, 1));
  body_ = register_module("body", seq);
}

torch::Tensor EncoderNetImpl::forward(const torch::Tensor& x) { return body_->forward(x); }

DecoderNetImpl::DecoderNetImpl(const NetConfig& c)
    : latent_channels_(c.latent_channels), patch_size_(c.patch_size()) {
  c.validate();
  nn::Sequential seq;
  int ch = width_at(c, c.downsample_blocks);
  seq->push_back(conv(c.latent_channels, ch, 3));
  for (int i = 0; i < c.res_blocks; ++i) seq->push_back(ResBlock(ch, c.groups, c.dropout));
  for (int i = c.downsample_blocks - 1; i >= 0; --i) {
    const int out = width_at(c, i);
    seq->push_back(nn::Upsample(
        nn::UpsampleOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest)));
    seq->push_back(conv(ch, out, 3));
    seq->push_back(norm(out, c.groups));
    seq->push_back(nn::SiLU());
    ch = out;
  }
  seq->push_back(conv(ch, 3, 3));
  seq->push_back(nn::Sigmoid());
  body_ = register_module("body", seq);
}

torch::Tensor DecoderNetImpl::forward(const torch::Tensor& f) { return body_->forward(f); }

DiscriminatorImpl::DiscriminatorImpl(int channels, int groups) {
  const int widths[3] = {channels, channels * 2, channels * 4};
  int in = 3;
  for (int i = 0; i < 3; ++i) {
    nn::Sequential layer;
    if (i < 2) {
      layer->push_back(conv(in, widths[i], 4, 2, 1));
    } else {
      layer->push_back(conv(in, widths[i], 3, 1, 1));
    }
    if (i > 0) layer->push_back(norm(widths[i], groups));
    layer->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
    layers_.push_back(register_module("layer" + std::to_string(i), layer));
    heads_.push_back(register_module("head" + std::to_string(i), conv(widths[i], 1, 1)));
    in = widths[i];
  }
}

DiscriminatorOutput DiscriminatorImpl::forward(const torch::Tensor& x) {
  DiscriminatorOutput out;
  auto h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i]->forward(h);
    out.features.push_back(h);
    out.logits.push_back(heads_[i](h));
  }
  return out;
}

LatentUNetImpl::LatentUNetImpl(int channels, int width, int groups) {
  auto block = [&](int in, int out, int stride) {
    nn::Sequential s;
    s->push_back(conv(in, out, 3, stride, 1));
    s->push_back(norm(out, groups));
    s->push_back(nn::SiLU());
    return s;
  };
  in_ = register_module("in", block(channels, width, 1));
  down1_ = register_module("down1", block(width, 2 * width, 2));
  down2_ = register_module("down2", block(2 * width, 2 * width, 2));
  up1_ = register_module("up1", block(4 * width, 2 * width, 1));
  up2_ = register_module("up2", block(3 * width, width, 1));
  out_ = register_module("out", conv(width, channels, 1));
}

torch::Tensor LatentUNetImpl::forward(const torch::Tensor& x) {
  auto upsample_to = [](const torch::Tensor& t, const torch::Tensor& like) {
    return F::interpolate(t, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{like.size(2), like.size(3)})
                                 .mode(torch::kNearest));
  };
  auto h0 = in_->forward(x);
  auto h1 = down1_->forward(h0);
  auto h2 = down2_->forward(h1);
  auto u1 = up1_->forward(torch::cat({upsample_to(h2, h1), h1}, 1));
  auto u2 = up2_->forward(torch::cat({upsample_to(u1, h0), h0}, 1));
  return out_(u2);
}

}  // namespace stainvar
