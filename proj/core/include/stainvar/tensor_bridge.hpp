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

#pragma once

#include <torch/torch.h>

#include <vector>

#include "stainvar/domain.hpp"

namespace stainvar {

// [3,H,W] float32 copy.
torch::Tensor to_tensor(const Image& image);
// [N,3,H,W] float32 batch.
torch::Tensor to_batch(const std::vector<Image>& images);
// Accepts [3,H,W] or [1,3,H,W]; values are clamped into [0,1] to absorb
// float rounding from bounded activations.
Image image_from_tensor(const torch::Tensor& t);

// [C,H,W] float32 copy.
torch::Tensor to_tensor(const FeatureMap& map);
// Accepts [C,H,W] or [1,C,H,W].
FeatureMap feature_map_from_tensor(const torch::Tensor& t);

// [V,C] float32 copy.
torch::Tensor to_tensor(const Codebook& codebook);
Codebook codebook_from_tensor(const torch::Tensor& t);

torch::Tensor to_tensor(const IndexGrid& grid);  // [h,w] int64
IndexGrid index_grid_from_tensor(const torch::Tensor& t);

std::vector<float> to_vector(const torch::Tensor& t);

}  // namespace stainvar
