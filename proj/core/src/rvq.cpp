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

#include "stainvar/rvq.hpp"

#include <cmath>

#include "stainvar/error.hpp"
#include "stainvar/tensor_bridge.hpp"

namespace stainvar {
namespace rvq {

torch::Tensor interpolation_matrix(int in, int out, torch::ScalarType dtype) {
  if (in < 1 || out < 1) throw InvalidArgument("interpolation sizes must be >= 1");
  auto m = torch::zeros({out, in}, torch::kFloat64);
  auto acc = m.accessor<double, 2>();
  for (int i = 0; i < out; ++i) {
    const double pos = out == 1 ? (in - 1) / 2.0
                                : static_cast<double>(i) * (in - 1) / static_cast<double>(out - 1);
    int lo = static_cast<int>(std::floor(pos));
    double frac = pos - lo;
    if (lo >= in - 1) {
      lo = in - 1;
      frac = 0.0;
    }
    acc[i][lo] += 1.0 - frac;
    if (frac > 0.0) acc[i][lo + 1] += frac;
  }
  return m.to(dtype);
}

torch::Tensor interpolate(const torch::Tensor& x, int h_out, int w_out) {
  if (h_out < 1 || w_out < 1) throw InvalidArgument("interpolate target must be >= 1x1");
  if (x.dim() < 2) throw ShapeError("interpolate needs at least a 2-D tensor");
  const int h_in = static_cast<int>(x.size(-2));
  const int w_in = static_cast<int>(x.size(-1));
  if (h_in == h_out && w_in == w_out) return x;
  auto out = x;
  if (h_in != h_out) {
    out = torch::matmul(interpolation_matrix(h_in, h_out, x.scalar_type()), out);
  }
  if (w_in != w_out) {
    out = torch::matmul(out, interpolation_matrix(w_in, w_out, x.scalar_type()).t());
  }
  return out;
}

torch::Tensor nearest_indices(const torch::Tensor& x, const torch::Tensor& codebook) {
  if (x.dim() != 4) throw ShapeError("nearest_indices expects [N,C,h,w]");
  if (codebook.dim() != 2 || codebook.size(1) != x.size(1)) {
    throw ShapeError("feature channels (" + std::to_string(x.size(1)) +
                     ") do not match codebook dimension");
  }
  torch::NoGradGuard no_grad;
  const auto n = x.size(0), h = x.size(2), w = x.size(3);
  auto flat = x.detach().permute({0, 2, 3, 1}).reshape({-1, x.size(1)}).to(torch::kFloat64);
  auto cb = codebook.detach().to(torch::kFloat64);
  auto dist = flat.pow(2).sum(1, /*keepdim=*/true) - 2.0 * flat.mm(cb.t()) +
              cb.pow(2).sum(1).unsqueeze(0);
  return dist.argmin(1).view({n, h, w});
}

torch::Tensor lookup(const torch::Tensor& codebook, const torch::Tensor& indices) {
  const auto n = indices.size(0), h = indices.size(1), w = indices.size(2);
  return codebook.index_select(0, indices.reshape({-1}))
      .view({n, h, w, codebook.size(1)})
      .permute({0, 3, 1, 2})
      .contiguous();
}

ProjectionsImpl::ProjectionsImpl(int scales, int channels) : channels_(channels) {
  if (scales < 1 || channels < 1) throw InvalidArgument("projection dimensions must be positive");
  for (int k = 0; k < scales; ++k) {
    weights_.push_back(register_parameter("w" + std::to_string(k), torch::eye(channels)));
    biases_.push_back(register_parameter("b" + std::to_string(k), torch::zeros({channels})));
  }
}

torch::Tensor ProjectionsImpl::forward(int k, const torch::Tensor& x) const {
  const auto& w = weights_.at(static_cast<std::size_t>(k));
  return torch::conv2d(x, w.view({channels_, channels_, 1, 1}), biases_[k]);
}

ScaleProjection ProjectionsImpl::to_value() const {
  std::vector<float> w, b;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    auto wk = to_vector(weights_[k]);
    auto bk = to_vector(biases_[k]);
    w.insert(w.end(), wk.begin(), wk.end());
    b.insert(b.end(), bk.begin(), bk.end());
  }
  return ScaleProjection(scales(), channels_, std::move(w), std::move(b));
}

void ProjectionsImpl::load_value(const ScaleProjection& value) {
  if (value.scales() != scales() || value.channels() != channels_) {
    throw ShapeError("projection shape mismatch");
  }
  torch::NoGradGuard no_grad;
  for (int k = 0; k < scales(); ++k) {
    auto wk = value.weight(k);
    auto bk = value.bias(k);
    weights_[k].copy_(torch::from_blob(const_cast<float*>(wk.data()), {channels_, channels_},
                                       torch::kFloat32));
    biases_[k].copy_(
        torch::from_blob(const_cast<float*>(bk.data()), {channels_}, torch::kFloat32));
  }
}

BatchEncoding encode(const torch::Tensor& f, const torch::Tensor& codebook,
                     const ScaleSchedule& schedule, const ProjectionsImpl& proj) {
  if (f.dim() != 4) throw ShapeError("encode expects [N,C,H,W]");
  const Extent grid{static_cast<int>(f.size(2)), static_cast<int>(f.size(3))};
  require_valid_schedule(schedule, grid);
  if (static_cast<std::size_t>(proj.scales()) != schedule.size()) {
    throw ShapeError("projection count does not match the schedule");
  }
  if (proj.channels() != f.size(1) || codebook.size(1) != f.size(1)) {
    throw ShapeError("channel disagreement between features, codebook and projections");
  }

  BatchEncoding out;
  auto residual = f;
  torch::Tensor aggregate;
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    const auto& e = schedule[k];
    auto coarse = interpolate(residual, e.h, e.w);
    auto idx = nearest_indices(coarse, codebook);
    auto term = proj.forward(static_cast<int>(k),
                             interpolate(lookup(codebook, idx), grid.h, grid.w));
    residual = residual - term;
    aggregate = aggregate.defined() ? aggregate + term : term;
    out.indices.push_back(idx);
    out.quantizer_inputs.push_back(coarse.detach());
  }
  out.aggregate = aggregate;
  out.final_residual = residual;
  return out;
}

torch::Tensor aggregate_embeddings(const std::vector<torch::Tensor>& embeddings,
                                   const ProjectionsImpl& proj, Extent target) {
  if (embeddings.size() != static_cast<std::size_t>(proj.scales())) {
    throw ShapeError("embedding count does not match projection count");
  }
  torch::Tensor sum;
  for (std::size_t k = 0; k < embeddings.size(); ++k) {
    auto term = proj.forward(static_cast<int>(k), interpolate(embeddings[k], target.h, target.w));
    sum = sum.defined() ? sum + term : term;
  }
  return sum;
}

torch::Tensor aggregate_indices(const std::vector<torch::Tensor>& indices,
                                const torch::Tensor& codebook, const ProjectionsImpl& proj,
                                Extent target) {
  std::vector<torch::Tensor> z;
  z.reserve(indices.size());
  for (const auto& idx : indices) z.push_back(lookup(codebook, idx));
  return aggregate_embeddings(z, proj, target);
}

std::vector<torch::Tensor> next_scale_inputs(const std::vector<torch::Tensor>& indices,
                                             const torch::Tensor& codebook,
                                             const ProjectionsImpl& proj,
                                             const ScaleSchedule& schedule, Extent target) {
  std::vector<torch::Tensor> out(schedule.size());
  torch::Tensor acc;
  for (std::size_t k = 0; k + 1 < schedule.size(); ++k) {
    auto term = proj.forward(static_cast<int>(k),
                             interpolate(lookup(codebook, indices[k]), target.h, target.w));
    acc = acc.defined() ? acc + term : term;
    out[k + 1] = interpolate(acc, schedule[k + 1].h, schedule[k + 1].w);
  }
  return out;
}

}  // namespace rvq

namespace {

rvq::Projections make_projections(const ScaleProjection& value) {
  rvq::Projections p(value.scales(), value.channels());
  p->load_value(value);
  return p;
}

}  // namespace

IndexGrid quantize_nearest(const FeatureMap& features, const Codebook& codebook) {
  if (features.channels() != codebook.dim()) {
    throw ShapeError("feature channels (" + std::to_string(features.channels()) +
                     ") do not match codebook dimension (" + std::to_string(codebook.dim()) + ")");
  }
  auto idx = rvq::nearest_indices(to_tensor(features).unsqueeze(0), to_tensor(codebook));
  return index_grid_from_tensor(idx.squeeze(0));
}

FeatureMap interpolate(const FeatureMap& f, int h, int w) {
  torch::NoGradGuard no_grad;
  return feature_map_from_tensor(rvq::interpolate(to_tensor(f), h, w));
}

EncodeResult encode_multiscale(const FeatureMap& f, const Codebook& codebook,
                               const ScaleSchedule& schedule, const ScaleProjection& proj) {
  require_valid_schedule(schedule, f.extent());
  if (f.channels() != codebook.dim() || f.channels() != proj.channels()) {
    throw ShapeError("channel disagreement between features, codebook and projections");
  }
  if (static_cast<std::size_t>(proj.scales()) != schedule.size()) {
    throw ShapeError("projection count does not match the schedule");
  }
  torch::NoGradGuard no_grad;
  auto phi = make_projections(proj);
  auto enc = rvq::encode(to_tensor(f).unsqueeze(0), to_tensor(codebook), schedule, *phi);
  std::vector<IndexGrid> grids;
  for (const auto& idx : enc.indices) grids.push_back(index_grid_from_tensor(idx.squeeze(0)));
  return EncodeResult{TokenPyramid(schedule, std::move(grids), codebook.content_hash()),
                      feature_map_from_tensor(enc.final_residual),
                      feature_map_from_tensor(enc.aggregate)};
}

FeatureMap aggregate_reconstruct(const TokenPyramid& pyramid, const Codebook& codebook,
                                 const ScaleProjection& proj, Extent target) {
  if (pyramid.codebook_hash() != codebook.content_hash()) {
    throw HashMismatchError("token pyramid is bound to codebook hash " +
                            std::to_string(pyramid.codebook_hash()) + ", got " +
                            std::to_string(codebook.content_hash()));
  }
  if (pyramid.max_index() >= codebook.size()) {
    throw FormatError(FormatErrorKind::kIndexOutOfRange,
                      "token index " + std::to_string(pyramid.max_index()) +
                          " >= codebook size " + std::to_string(codebook.size()));
  }
  if (static_cast<std::size_t>(proj.scales()) != pyramid.depth() ||
      proj.channels() != codebook.dim()) {
    throw ShapeError("projection does not match pyramid depth or codebook dimension");
  }
  torch::NoGradGuard no_grad;
  auto phi = make_projections(proj);
  std::vector<torch::Tensor> idx;
  for (const auto& g : pyramid.grids()) idx.push_back(to_tensor(g).unsqueeze(0));
  return feature_map_from_tensor(rvq::aggregate_indices(idx, to_tensor(codebook), *phi, target));
}

}  // namespace stainvar
