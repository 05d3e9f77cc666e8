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

// Structure-conditioned next-scale autoregressive transformer.
//
// The token sequence is a concatenation of K blocks, one per scale. Block 1
// holds the embedded start map (the translated features resampled to the
// coarsest scale); block k > 1 holds the running reconstruction from scales
// < k resampled to (h_k, w_k). Block k predicts the tokens of scale k.
// Attention is block-causal, and every layer norm is modulated by the global
// context vector.

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <random>
#include <vector>

#include "stainvar/domain.hpp"
#include "stainvar/rvq.hpp"

namespace stainvar {

struct VarConfig {
  int vocab_size = 4096;
  int channels = 32;
  int dim = 256;
  int layers = 4;
  int heads = 4;
  int mlp_ratio = 4;
  double dropout = 0.0;
  ScaleSchedule schedule = ScaleSchedule::default_schedule();
  // Off: a learned start token replicated over the first block.
  bool use_start_map = true;
  // Off: the context vector is replaced by zeros.
  bool use_global_context = true;

  void validate() const;
};

struct StartMap {
  FeatureMap map;               // C x h_1 x w_1
  std::uint64_t source_hash = 0;  // content hash of the features it came from
};

struct GlobalContext {
  std::vector<float> values;  // length C
};

StartMap build_start_map(const FeatureMap& f_pred, const ScaleSchedule& schedule);
GlobalContext global_context(const FeatureMap& f_pred);

// Batched forms over [N,C,H,W].
torch::Tensor build_start_map(const torch::Tensor& f_pred, const ScaleSchedule& schedule);
torch::Tensor global_context(const torch::Tensor& f_pred);

class AdaLayerNormImpl : public torch::nn::Module {
 public:
  AdaLayerNormImpl(int dim, int context);
  // x: [N,L,D]; ctx: [N,C]
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& ctx);

  torch::nn::Linear modulation{nullptr};

 private:
  int dim_;
};
TORCH_MODULE(AdaLayerNorm);

class VarBlockImpl : public torch::nn::Module {
 public:
  VarBlockImpl(const VarConfig& config);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& ctx,
                        const torch::Tensor& additive_mask);

 private:
  int heads_;
  AdaLayerNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Linear qkv_{nullptr}, proj_{nullptr}, fc1_{nullptr}, fc2_{nullptr};
  torch::nn::Dropout drop_{nullptr};
};
TORCH_MODULE(VarBlock);

class VarTransformerImpl : public torch::nn::Module {
 public:
  explicit VarTransformerImpl(const VarConfig& config);

  // start: [N,C,h_1,w_1]; ctx: [N,C]; scale_inputs[k] for k = 1..blocks-1 is
  // [N,C,h_k,w_k] (element 0 is ignored). Returns logits [N, L, V] for the
  // first `blocks` blocks, L = offset(blocks).
  torch::Tensor forward(const torch::Tensor& start, const torch::Tensor& ctx,
                        const std::vector<torch::Tensor>& scale_inputs, int blocks);

  const VarConfig& config() const noexcept { return config_; }
  // Sequence offset of block k; offset(K) is the full length.
  std::int64_t offset(int k) const { return offsets_.at(static_cast<std::size_t>(k)); }
  // Boolean [L,L], true where attention is allowed.
  torch::Tensor attention_mask(int blocks) const;

 private:
  VarConfig config_;
  std::vector<std::int64_t> offsets_;
  std::vector<std::int64_t> levels_;
  torch::nn::Linear start_embed_{nullptr}, word_embed_{nullptr}, head_{nullptr};
  torch::Tensor start_token_, pos_embed_, level_embed_;
  std::vector<VarBlock> blocks_;
  AdaLayerNorm final_norm_{nullptr};
};
TORCH_MODULE(VarTransformer);

// Per-scale logits [N, h_k*w_k, V] conditioned on ground-truth tokens of the
// coarser scales (indices[k] is int64 [N,h_k,w_k]).
std::vector<torch::Tensor> forward_teacher_forced(VarTransformerImpl& model,
                                                  const std::vector<torch::Tensor>& indices,
                                                  const torch::Tensor& start,
                                                  const torch::Tensor& ctx,
                                                  const torch::Tensor& codebook,
                                                  const rvq::ProjectionsImpl& proj,
                                                  Extent grid);

// Value-level form. Throws ScheduleError when the pyramid's schedule differs
// from the model's and HashMismatchError when it was not produced with
// `codebook`. Returns per-scale logits [h_k*w_k, V].
std::vector<torch::Tensor> forward_teacher_forced(const TokenPyramid& gt,
                                                  const StartMap& start,
                                                  const GlobalContext& ctx,
                                                  VarTransformerImpl& model,
                                                  const Codebook& codebook,
                                                  const ScaleProjection& proj);

// Mean token cross-entropy over every position of every scale. Throws
// FormatError(kIndexOutOfRange) for targets >= V.
torch::Tensor ce_loss(const std::vector<torch::Tensor>& logits,
                      const std::vector<torch::Tensor>& indices);
std::vector<double> per_scale_ce(const std::vector<torch::Tensor>& logits,
                                 const std::vector<torch::Tensor>& indices);

struct ArTerms {
  torch::Tensor ce;
  torch::Tensor pixel;
  torch::Tensor adv;
  torch::Tensor total;
};

// total = ce + lambda_1 * mean|x_ihc - xhat| + lambda_2 * adv.
ArTerms ar_objective(const torch::Tensor& x_ihc, const torch::Tensor& xhat,
                     const torch::Tensor& ce, const torch::Tensor& adv,
                     const LossWeights& weights);

struct ArReport {
  double ce = 0.0;
  double pixel = 0.0;
  double adv = 0.0;
  double total = 0.0;
};

ArReport ar_objective(const Image& x_ihc, const Image& xhat, double ce, double adv,
                      const LossWeights& weights);

struct SamplingStrategy {
  enum class Kind { kGreedy, kTemperature, kTopK };
  Kind kind = Kind::kGreedy;
  double temperature = 1.0;
  int top_k = 1;

  static SamplingStrategy greedy() { return {}; }
  static SamplingStrategy with_temperature(double tau) { return {Kind::kTemperature, tau, 0}; }
  static SamplingStrategy with_top_k(int k, double tau = 1.0) { return {Kind::kTopK, tau, k}; }
  // Throws InvalidArgument for tau <= 0 or k outside [1, vocab].
  void validate(int vocab) const;
};

// logits: [..., V]; returns int64 indices of shape logits.shape[:-1].
// Greedy breaks ties toward the lowest index.
torch::Tensor sample_scale(const torch::Tensor& logits, const SamplingStrategy& strategy,
                           std::mt19937_64& rng);

// Scale-by-scale generation, recomputing the full prefix at each scale.
// Returns per-scale int64 index grids [N,h_k,w_k].
std::vector<torch::Tensor> generate_tokens(VarTransformerImpl& model, const torch::Tensor& start,
                                           const torch::Tensor& ctx,
                                           const torch::Tensor& codebook,
                                           const rvq::ProjectionsImpl& proj, Extent grid,
                                           const SamplingStrategy& strategy,
                                           std::mt19937_64& rng);

}  // namespace stainvar
