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

// Multi-scale residual vector quantization.
//
// Encoding walks the schedule coarse to fine: the running residual is
// resampled to scale k, snapped to its nearest codewords, and the projected,
// re-upsampled codewords are subtracted from the residual. Reconstruction
// sums the same projected terms, so aggregate + final residual reproduces the
// input feature map exactly up to float rounding.
//
// Two layers are exposed: batched tensor kernels in stainvar::rvq used by the
// training code (differentiable where it matters), and value-level functions
// over the domain types.

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "stainvar/domain.hpp"

namespace stainvar {
namespace rvq {

// Corner-aligned bilinear resampling weights, shape [out, in]. Output i
// samples source coordinate i * (in - 1) / (out - 1); a single output sample
// sits at the source centre. Rows sum to one.
torch::Tensor interpolation_matrix(int in, int out, torch::ScalarType dtype = torch::kFloat32);

// Separable bilinear resize of [N,C,h,w] (or [C,h,w]) to (h_out, w_out).
// Differentiable; the identity when the size is unchanged.
torch::Tensor interpolate(const torch::Tensor& x, int h_out, int w_out);

// Nearest codeword per spatial location of x ([N,C,h,w]); codebook is [V,C].
// Distances are evaluated in double; ties resolve to the lowest index.
// Returns int64 [N,h,w].
torch::Tensor nearest_indices(const torch::Tensor& x, const torch::Tensor& codebook);

// Gathers codewords for int64 indices [N,h,w] into [N,C,h,w].
torch::Tensor lookup(const torch::Tensor& codebook, const torch::Tensor& indices);

// Trainable phi_k: one 1x1 linear map + bias per scale, identity-initialised.
class ProjectionsImpl : public torch::nn::Module {
 public:
  ProjectionsImpl(int scales, int channels);

  // x: [N,C,H,W]
  torch::Tensor forward(int k, const torch::Tensor& x) const;

  int scales() const noexcept { return static_cast<int>(weights_.size()); }
  int channels() const noexcept { return channels_; }

  ScaleProjection to_value() const;
  void load_value(const ScaleProjection& value);

 private:
  int channels_;
  std::vector<torch::Tensor> weights_;
  std::vector<torch::Tensor> biases_;
};
TORCH_MODULE(Projections);

struct BatchEncoding {
  std::vector<torch::Tensor> indices;           // per scale, int64 [N,h_k,w_k]
  std::vector<torch::Tensor> quantizer_inputs;  // per scale, detached [N,C,h_k,w_k]
  torch::Tensor aggregate;                      // [N,C,H,W]
  torch::Tensor final_residual;                 // [N,C,H,W]
};

// Batched multi-scale residual encoding of f ([N,C,H,W]). Gradients reach f
// and the projections through the residual path; indices are discrete.
BatchEncoding encode(const torch::Tensor& f, const torch::Tensor& codebook,
                     const ScaleSchedule& schedule, const ProjectionsImpl& proj);

// Sum over scales of phi_k(Interpolate(z_k, H, W)) for per-scale embeddings
// z_k ([N,C,h_k,w_k]). Differentiable in z and phi.
torch::Tensor aggregate_embeddings(const std::vector<torch::Tensor>& embeddings,
                                   const ProjectionsImpl& proj, Extent target);

torch::Tensor aggregate_indices(const std::vector<torch::Tensor>& indices,
                                const torch::Tensor& codebook, const ProjectionsImpl& proj,
                                Extent target);

// Running reconstruction after each scale, resampled to the next scale:
// element k (k >= 1) is Interpolate(sum_{j<k} phi_j(...), h_k, w_k). Element 0
// is undefined. Used to build teacher-forced transformer inputs.
std::vector<torch::Tensor> next_scale_inputs(const std::vector<torch::Tensor>& indices,
                                             const torch::Tensor& codebook,
                                             const ProjectionsImpl& proj,
                                             const ScaleSchedule& schedule, Extent target);

}  // namespace rvq

struct EncodeResult {
  TokenPyramid pyramid;
  FeatureMap final_residual;
  FeatureMap aggregate;
};

// Throws ShapeError when feature channels differ from the codebook dimension.
IndexGrid quantize_nearest(const FeatureMap& features, const Codebook& codebook);

FeatureMap interpolate(const FeatureMap& f, int h, int w);

// Throws ScheduleError on an invalid schedule, ShapeError on channel
// disagreement between features, codebook and projections.
EncodeResult encode_multiscale(const FeatureMap& f, const Codebook& codebook,
                               const ScaleSchedule& schedule, const ScaleProjection& proj);

// Throws HashMismatchError when the pyramid was not produced with this
// codebook, FormatError(kIndexOutOfRange) on indices >= V.
FeatureMap aggregate_reconstruct(const TokenPyramid& pyramid, const Codebook& codebook,
                                 const ScaleProjection& proj, Extent target);

// Token-pyramid binary format, all integers little-endian:
//   "RVQP" | version u8 | K u8 | K x (h u16, w u16) | codebook_hash u64 |
//   per scale h*w indices as u16, row-major.
inline constexpr std::uint8_t kPyramidFormatVersion = 1;

std::vector<std::uint8_t> serialize_pyramid(const TokenPyramid& pyramid);

// Throws FormatError with kBadMagic, kUnsupportedVersion, kTruncated,
// kTrailingBytes, kInvalidSchedule, or kIndexOutOfRange (only checked when
// vocab_size is given).
TokenPyramid deserialize_pyramid(std::span<const std::uint8_t> bytes,
                                 std::optional<int> vocab_size = std::nullopt);

}  // namespace stainvar
