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

// Differentiable form of the perceptual proxy, shared by the image metric and
// the VQ-VAE training objective.

#pragma once

#include <torch/torch.h>

#include <vector>

namespace stainvar::perceptual {

inline constexpr int kLevels = 3;

// Per-level feature stacks of x ([N,3,H,W]). Level l holds the Gaussian
// level itself, its band-pass residual and two Sobel gradient responses,
// i.e. [N, 12, H/2^l, W/2^l].
std::vector<torch::Tensor> features(const torch::Tensor& x);

// Sum over levels of the mean absolute feature difference. Scalar tensor,
// differentiable in both arguments.
torch::Tensor distance(const torch::Tensor& a, const torch::Tensor& b);

}  // namespace stainvar::perceptual
