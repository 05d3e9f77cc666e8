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

#include "stainvar/tensor_bridge.hpp"

#include "stainvar/error.hpp"

namespace stainvar {

namespace {

torch::Tensor from_floats(const std::vector<float>& data, std::vector<int64_t> shape) {
  return torch::from_blob(const_cast<float*>(data.data()), shape, torch::kFloat32).clone();
}

torch::Tensor drop_unit_batch(const torch::Tensor& t, int64_t rank) {
  if (t.dim() == rank + 1) {
    if (t.size(0) != 1) throw ShapeError("expected a single-item batch");
    return t.squeeze(0);
  }
  if (t.dim() != rank) throw ShapeError("unexpected tensor rank " + std::to_string(t.dim()));
  return t;
}

}  // namespace

std::vector<float> to_vector(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat32).contiguous().cpu();
  return std::vector<float>(c.data_ptr<float>(), c.data_ptr<float>() + c.numel());
}

torch::Tensor to_tensor(const Image& image) {
  return from_floats(image.data(), {Image::kChannels, image.height(), image.width()});
}

torch::Tensor to_batch(const std::vector<Image>& images) {
  std::vector<torch::Tensor> items;
  items.reserve(images.size());
  for (const auto& im : images) items.push_back(to_tensor(im));
  return torch::stack(items);
}

Image image_from_tensor(const torch::Tensor& t) {
  auto x = drop_unit_batch(t, 3);
  if (x.size(0) != Image::kChannels) throw ShapeError("image tensor must have 3 channels");
  if (!torch::isfinite(x).all().item<bool>()) throw NumericError("image tensor is not finite");
  x = x.clamp(0.0, 1.0);
  return Image(static_cast<int>(x.size(1)), static_cast<int>(x.size(2)), to_vector(x));
}

torch::Tensor to_tensor(const FeatureMap& map) {
  return from_floats(map.data(), {map.channels(), map.height(), map.width()});
}

FeatureMap feature_map_from_tensor(const torch::Tensor& t) {
  auto x = drop_unit_batch(t, 3);
  if (!torch::isfinite(x).all().item<bool>()) throw NumericError("feature tensor is not finite");
  return FeatureMap(static_cast<int>(x.size(0)), static_cast<int>(x.size(1)),
                    static_cast<int>(x.size(2)), to_vector(x));
}

torch::Tensor to_tensor(const Codebook& codebook) {
  return from_floats(codebook.entries(), {codebook.size(), codebook.dim()});
}

Codebook codebook_from_tensor(const torch::Tensor& t) {
  if (t.dim() != 2) throw ShapeError("codebook tensor must be [V,C]");
  return Codebook(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), to_vector(t));
}

torch::Tensor to_tensor(const IndexGrid& grid) {
  std::vector<int64_t> wide(grid.indices.begin(), grid.indices.end());
  return torch::tensor(wide, torch::kInt64).view({grid.h, grid.w});
}

IndexGrid index_grid_from_tensor(const torch::Tensor& t) {
  if (t.dim() != 2) throw ShapeError("index grid tensor must be [h,w]");
  auto c = t.to(torch::kInt64).contiguous();
  IndexGrid g;
  g.h = static_cast<int>(c.size(0));
  g.w = static_cast<int>(c.size(1));
  g.indices.assign(c.data_ptr<int64_t>(), c.data_ptr<int64_t>() + c.numel());
  return g;
}

}  // namespace stainvar
