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

#include "stainvar/var_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "stainvar/error.hpp"
#include "stainvar/nets.hpp"
#include "stainvar/tensor_bridge.hpp"

namespace stainvar {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

void VarConfig::validate() const {
  if (vocab_size < 2) throw InvalidArgument("vocab_size must be >= 2");
  if (channels < 1 || dim < 1 || layers < 0 || heads < 1 || mlp_ratio < 1) {
    throw InvalidArgument("invalid transformer dimensions");
  }
  if (dim % heads != 0) throw InvalidArgument("dim must be divisible by heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("dropout must be in [0,1)");
  if (schedule.empty()) throw InvalidArgument("scale schedule is empty");
}

StartMap build_start_map(const FeatureMap& f_pred, const ScaleSchedule& schedule) {
  require_valid_schedule(schedule, f_pred.extent());
  StartMap s;
  s.map = interpolate(f_pred, schedule.first().h, schedule.first().w);
  s.source_hash = content_hash(f_pred.data());
  return s;
}

GlobalContext global_context(const FeatureMap& f_pred) {
  GlobalContext g;
  const std::size_t plane = static_cast<std::size_t>(f_pred.height()) * f_pred.width();
  for (int c = 0; c < f_pred.channels(); ++c) {
    double sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) sum += f_pred.data()[c * plane + i];
    g.values.push_back(static_cast<float>(sum / static_cast<double>(plane)));
  }
  return g;
}

torch::Tensor build_start_map(const torch::Tensor& f_pred, const ScaleSchedule& schedule) {
  require_valid_schedule(schedule, {static_cast<int>(f_pred.size(-2)),
                                    static_cast<int>(f_pred.size(-1))});
  return rvq::interpolate(f_pred, schedule.first().h, schedule.first().w);
}

torch::Tensor global_context(const torch::Tensor& f_pred) { return f_pred.mean({-2, -1}); }

AdaLayerNormImpl::AdaLayerNormImpl(int dim, int context) : dim_(dim) {
  modulation = register_module("modulation", nn::Linear(context, 2 * dim));
  torch::NoGradGuard no_grad;
  modulation->weight.zero_();
  modulation->bias.zero_();
}

torch::Tensor AdaLayerNormImpl::forward(const torch::Tensor& x, const torch::Tensor& ctx) {
  auto h = F::layer_norm(x, F::LayerNormFuncOptions({dim_}).eps(1e-6));
  auto mod = modulation(ctx).unsqueeze(1);
  auto parts = mod.chunk(2, -1);
  return h * (1.0 + parts[1]) + parts[0];
}

VarBlockImpl::VarBlockImpl(const VarConfig& c) : heads_(c.heads) {
  norm1_ = register_module("norm1", AdaLayerNorm(c.dim, c.channels));
  qkv_ = register_module("qkv", nn::Linear(c.dim, 3 * c.dim));
  proj_ = register_module("proj", nn::Linear(c.dim, c.dim));
  norm2_ = register_module("norm2", AdaLayerNorm(c.dim, c.channels));
  fc1_ = register_module("fc1", nn::Linear(c.dim, c.mlp_ratio * c.dim));
  fc2_ = register_module("fc2", nn::Linear(c.mlp_ratio * c.dim, c.dim));
  drop_ = register_module("drop", nn::Dropout(c.dropout));
}

torch::Tensor VarBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& ctx,
                                    const torch::Tensor& additive_mask) {
  const auto n = x.size(0), l = x.size(1), d = x.size(2);
  const auto dh = d / heads_;
  auto qkv = qkv_(norm1_(x, ctx)).view({n, l, 3, heads_, dh}).permute({2, 0, 3, 1, 4});
  auto q = qkv[0], k = qkv[1], v = qkv[2];
  auto att = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(dh));
  att = torch::softmax(att + additive_mask, -1);
  auto o = torch::matmul(drop_(att), v).transpose(1, 2).reshape({n, l, d});
  auto h = x + drop_(proj_(o));
  return h + drop_(fc2_(F::gelu(fc1_(norm2_(h, ctx)))));
}

VarTransformerImpl::VarTransformerImpl(const VarConfig& config) : config_(config) {
  config_.validate();
  const auto& s = config_.schedule;
  offsets_.push_back(0);
  for (std::size_t k = 0; k < s.size(); ++k) {
    offsets_.push_back(offsets_.back() + static_cast<std::int64_t>(s[k].h) * s[k].w);
    for (int i = 0; i < s[k].h * s[k].w; ++i) levels_.push_back(static_cast<std::int64_t>(k));
  }
  const int c = config_.channels, d = config_.dim;
  start_embed_ = register_module("start_embed", nn::Linear(c, d));
  word_embed_ = register_module("word_embed", nn::Linear(c, d));
  start_token_ = register_parameter("start_token", torch::randn({1, 1, d}) * 0.02);
  pos_embed_ = register_parameter("pos_embed", torch::randn({offsets_.back(), d}) * 0.02);
  level_embed_ = register_parameter("level_embed",
                                    torch::randn({static_cast<int64_t>(s.size()), d}) * 0.02);
  for (int i = 0; i < config_.layers; ++i) {
    blocks_.push_back(register_module("block" + std::to_string(i), VarBlock(config_)));
  }
  final_norm_ = register_module("final_norm", AdaLayerNorm(d, c));
  head_ = register_module("head", nn::Linear(d, config_.vocab_size));
}

torch::Tensor VarTransformerImpl::attention_mask(int blocks) const {
  const auto len = offset(blocks);
  auto lev = torch::tensor(std::vector<std::int64_t>(levels_.begin(), levels_.begin() + len));
  return lev.unsqueeze(0) <= lev.unsqueeze(1);
}

torch::Tensor VarTransformerImpl::forward(const torch::Tensor& start, const torch::Tensor& ctx,
                                          const std::vector<torch::Tensor>& scale_inputs,
                                          int blocks) {
  const auto& s = config_.schedule;
  if (blocks < 1 || blocks > static_cast<int>(s.size())) {
    throw InvalidArgument("block count out of range");
  }
  if (start.dim() != 4 || start.size(1) != config_.channels || start.size(2) != s.first().h ||
      start.size(3) != s.first().w) {
    throw ShapeError("start map must be [N," + std::to_string(config_.channels) + "," +
                     std::to_string(s.first().h) + "," + std::to_string(s.first().w) + "]");
  }
  if (ctx.dim() != 2 || ctx.size(0) != start.size(0) || ctx.size(1) != config_.channels) {
    throw ShapeError("global context must be [N,C]");
  }
  const auto n = start.size(0);
  const auto n1 = static_cast<std::int64_t>(s.first().h) * s.first().w;
  std::vector<torch::Tensor> parts;
  if (config_.use_start_map) {
    parts.push_back(start_embed_(start.flatten(2).transpose(1, 2)));
  } else {
    parts.push_back(start_token_.expand({n, n1, config_.dim}));
  }
  for (int k = 1; k < blocks; ++k) {
    const auto& in = scale_inputs.at(static_cast<std::size_t>(k));
    if (in.dim() != 4 || in.size(0) != n || in.size(1) != config_.channels ||
        in.size(2) != s[k].h || in.size(3) != s[k].w) {
      throw ShapeError("scale input " + std::to_string(k) + " has the wrong shape");
    }
    parts.push_back(word_embed_(in.flatten(2).transpose(1, 2)));
  }
  const auto len = offset(blocks);
  auto lev = torch::tensor(std::vector<std::int64_t>(levels_.begin(), levels_.begin() + len));
  auto x = torch::cat(parts, 1) + pos_embed_.slice(0, 0, len) + level_embed_.index_select(0, lev);
  auto c = config_.use_global_context ? ctx : torch::zeros_like(ctx);
  auto mask = torch::zeros({len, len}, x.options())
                  .masked_fill(attention_mask(blocks).logical_not(),
                               -std::numeric_limits<double>::infinity());
  for (auto& b : blocks_) x = b->forward(x, c, mask);
  return head_(final_norm_(x, c));
}

std::vector<torch::Tensor> forward_teacher_forced(VarTransformerImpl& model,
                                                  const std::vector<torch::Tensor>& indices,
                                                  const torch::Tensor& start,
                                                  const torch::Tensor& ctx,
                                                  const torch::Tensor& codebook,
                                                  const rvq::ProjectionsImpl& proj, Extent grid) {
  const auto& s = model.config().schedule;
  if (indices.size() != s.size()) {
    throw ScheduleError("pyramid has " + std::to_string(indices.size()) + " scales, model has " +
                        std::to_string(s.size()));
  }
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (indices[k].size(1) != s[k].h || indices[k].size(2) != s[k].w) {
      throw ScheduleError("token grid " + std::to_string(k) + " does not match the schedule");
    }
  }
  auto inputs = rvq::next_scale_inputs(indices, codebook, proj, s, grid);
  auto logits = model.forward(start, ctx, inputs, static_cast<int>(s.size()));
  std::vector<torch::Tensor> out;
  for (std::size_t k = 0; k < s.size(); ++k) {
    out.push_back(logits.slice(1, model.offset(static_cast<int>(k)),
                               model.offset(static_cast<int>(k) + 1)));
  }
  return out;
}

std::vector<torch::Tensor> forward_teacher_forced(const TokenPyramid& gt, const StartMap& start,
                                                  const GlobalContext& ctx,
                                                  VarTransformerImpl& model,
                                                  const Codebook& codebook,
                                                  const ScaleProjection& proj) {
  if (!(gt.schedule() == model.config().schedule)) {
    throw ScheduleError("pyramid schedule " + gt.schedule().to_string() +
                        " differs from the model schedule " +
                        model.config().schedule.to_string());
  }
  if (gt.codebook_hash() != codebook.content_hash()) {
    throw HashMismatchError("token pyramid was not produced with this codebook");
  }
  const auto dtype = model.parameters().front().scalar_type();
  std::vector<torch::Tensor> idx;
  for (const auto& g : gt.grids()) idx.push_back(to_tensor(g).unsqueeze(0));
  rvq::Projections p(proj.scales(), proj.channels());
  p->load_value(proj);
  p->to(dtype);
  auto ctx_t = torch::tensor(ctx.values).unsqueeze(0).to(dtype);
  auto logits = forward_teacher_forced(model, idx, to_tensor(start.map).unsqueeze(0).to(dtype),
                                       ctx_t, to_tensor(codebook).to(dtype), *p,
                                       gt.schedule().last());
  for (auto& l : logits) l = l.squeeze(0);
  return logits;
}

torch::Tensor ce_loss(const std::vector<torch::Tensor>& logits,
                      const std::vector<torch::Tensor>& indices) {
  if (logits.size() != indices.size() || logits.empty()) {
    throw ShapeError("logits and targets disagree in scale count");
  }
  std::vector<torch::Tensor> ls, ts;
  const auto v = logits.front().size(-1);
  for (std::size_t k = 0; k < logits.size(); ++k) {
    auto l = logits[k].reshape({-1, v});
    auto t = indices[k].reshape({-1}).to(torch::kLong);
    if (l.size(0) != t.size(0)) throw ShapeError("logit count differs from target count");
    ls.push_back(l);
    ts.push_back(t);
  }
  auto target = torch::cat(ts);
  if (target.numel() > 0 && (target.max().item<std::int64_t>() >= v || target.min().item<std::int64_t>() < 0)) {
    throw FormatError(FormatErrorKind::kIndexOutOfRange, "target token outside [0, V)");
  }
  return F::cross_entropy(torch::cat(ls), target);
}

std::vector<double> per_scale_ce(const std::vector<torch::Tensor>& logits,
                                 const std::vector<torch::Tensor>& indices) {
  std::vector<double> out;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out.push_back(ce_loss({logits[k]}, {indices.at(k)}).item<double>());
  }
  return out;
}

ArTerms ar_objective(const torch::Tensor& x_ihc, const torch::Tensor& xhat, const torch::Tensor& ce,
                     const torch::Tensor& adv, const LossWeights& weights) {
  if (!x_ihc.sizes().equals(xhat.sizes())) throw ShapeError("ar_objective: image shapes differ");
  ArTerms t;
  t.ce = ce;
  t.pixel = (x_ihc - xhat).abs().mean();
  t.adv = adv;
  t.total = ce + weights.lambda_1 * t.pixel + weights.lambda_2 * adv;
  return t;
}

ArReport ar_objective(const Image& x_ihc, const Image& xhat, double ce, double adv,
                      const LossWeights& weights) {
  weights.validate();
  auto t = ar_objective(to_tensor(x_ihc), to_tensor(xhat), torch::tensor(ce, torch::kFloat64),
                        torch::tensor(adv, torch::kFloat64), weights);
  ArReport r;
  r.ce = ce;
  r.pixel = t.pixel.item<double>();
  r.adv = adv;
  r.total = r.ce + weights.lambda_1 * r.pixel + weights.lambda_2 * r.adv;
  return r;
}

void SamplingStrategy::validate(int vocab) const {
  if (kind != Kind::kGreedy && !(temperature > 0.0)) {
    throw InvalidArgument("sampling temperature must be > 0");
  }
  if (kind == Kind::kTopK && (top_k < 1 || top_k > vocab)) {
    throw InvalidArgument("top_k must be in [1, " + std::to_string(vocab) + "]");
  }
}

torch::Tensor sample_scale(const torch::Tensor& logits, const SamplingStrategy& strategy,
                           std::mt19937_64& rng) {
  const auto v = logits.size(-1);
  strategy.validate(static_cast<int>(v));
  auto flat = logits.detach().to(torch::kFloat64).contiguous().reshape({-1, v});
  if (!torch::isfinite(flat).all().item<bool>()) throw NumericError("non-finite logits");
  const auto rows = flat.size(0);
  const double* p = flat.data_ptr<double>();
  std::vector<std::int64_t> out(static_cast<std::size_t>(rows));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::int64_t> cand(static_cast<std::size_t>(v));
  std::vector<double> w;
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* row = p + r * v;
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < v; ++j) {
      if (row[j] > row[best]) best = j;
    }
    if (strategy.kind == SamplingStrategy::Kind::kGreedy ||
        (strategy.kind == SamplingStrategy::Kind::kTopK && strategy.top_k == 1)) {
      out[r] = best;
      continue;
    }
    std::iota(cand.begin(), cand.end(), 0);
    std::int64_t keep = v;
    if (strategy.kind == SamplingStrategy::Kind::kTopK) {
      keep = strategy.top_k;
      std::partial_sort(cand.begin(), cand.begin() + keep, cand.end(),
                        [&](std::int64_t a, std::int64_t b) {
                          return row[a] > row[b] || (row[a] == row[b] && a < b);
                        });
    }
    w.assign(static_cast<std::size_t>(keep), 0.0);
    double total = 0.0;
    for (std::int64_t i = 0; i < keep; ++i) {
      w[i] = std::exp((row[cand[i]] - row[best]) / strategy.temperature);
      total += w[i];
    }
    double u = unif(rng) * total;
    std::int64_t pick = cand[keep - 1];
    for (std::int64_t i = 0; i < keep; ++i) {
      u -= w[i];
      if (u < 0.0) {
        pick = cand[i];
        break;
      }
    }
    out[r] = pick;
  }
  auto shape = logits.sizes().vec();
  shape.pop_back();
  return torch::tensor(out, torch::kLong).view(shape);
}

std::vector<torch::Tensor> generate_tokens(VarTransformerImpl& model, const torch::Tensor& start,
                                           const torch::Tensor& ctx, const torch::Tensor& codebook,
                                           const rvq::ProjectionsImpl& proj, Extent grid,
                                           const SamplingStrategy& strategy,
                                           std::mt19937_64& rng) {
  ScopedEval eval(model);
  torch::NoGradGuard no_grad;
  const auto& s = model.config().schedule;
  const int k_total = static_cast<int>(s.size());
  const auto n = start.size(0);
  std::vector<torch::Tensor> inputs(s.size());
  std::vector<torch::Tensor> tokens;
  torch::Tensor acc;
  for (int k = 0; k < k_total; ++k) {
    auto logits = model.forward(start, ctx, inputs, k + 1)
                      .slice(1, model.offset(k), model.offset(k + 1));
    auto idx = sample_scale(logits, strategy, rng).view({n, s[k].h, s[k].w});
    tokens.push_back(idx);
    auto term = proj.forward(k, rvq::interpolate(rvq::lookup(codebook, idx), grid.h, grid.w));
    acc = acc.defined() ? acc + term : term;
    if (k + 1 < k_total) inputs[k + 1] = rvq::interpolate(acc, s[k + 1].h, s[k + 1].w);
  }
  return tokens;
}

}  // namespace stainvar
