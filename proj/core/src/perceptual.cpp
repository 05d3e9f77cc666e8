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

#include "stainvar/perceptual.hpp"

#include "stainvar/error.hpp"

namespace stainvar::perceptual {

namespace F = torch::nn::functional;

namespace {

// Depthwise 2-D filter with replicate padding; kernel is [kh,kw].
torch::Tensor depthwise(const torch::Tensor& x, const torch::Tensor& kernel) {
  const auto c = x.size(1);
  const auto kh = kernel.size(0), kw = kernel.size(1);
  auto padded = F::pad(x, F::PadFuncOptions({kw / 2, kw / 2, kh / 2, kh / 2})
                              .mode(torch::kReplicate));
  auto weight = kernel.to(x.scalar_type()).view({1, 1, kh, kw}).expand({c, 1, kh, kw});
  const std::vector<int64_t> one{1, 1}, zero{0, 0};
  return torch::conv2d(padded, weight, torch::Tensor(), one, zero, one, c);
}

torch::Tensor blur(const torch::Tensor& x) {
  auto taps = torch::tensor({1.0, 4.0, 6.0, 4.0, 1.0}, torch::kFloat64) / 16.0;
  return depthwise(x, torch::outer(taps, taps));
}

torch::Tensor sobel_x() {
  return torch::tensor({-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0}, torch::kFloat64)
             .view({3, 3}) /
         8.0;
}

}  // namespace

std::vector<torch::Tensor> features(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3) throw ShapeError("perceptual features expect [N,3,H,W]");
  std::vector<torch::Tensor> out;
  auto level = x;
  for (int l = 0; l < kLevels; ++l) {
    auto smooth = blur(level);
    auto gx = depthwise(level, sobel_x());
    auto gy = depthwise(level, sobel_x().t().contiguous());
    out.push_back(torch::cat({level, level - smooth, gx, gy}, 1));
    if (l + 1 < kLevels) {
      using torch::indexing::Slice;
      level = smooth.index({Slice(), Slice(), Slice(torch::indexing::None, torch::indexing::None, 2),
                            Slice(torch::indexing::None, torch::indexing::None, 2)});
    }
  }
  return out;
}

torch::Tensor distance(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) throw ShapeError("perceptual distance needs equal shapes");
  auto fa = features(a);
  auto fb = features(b);
  auto total = (fa[0] - fb[0]).abs().mean();
  for (std::size_t l = 1; l < fa.size(); ++l) total = total + (fa[l] - fb[l]).abs().mean();
  return total;
}

}  // namespace stainvar::perceptual
