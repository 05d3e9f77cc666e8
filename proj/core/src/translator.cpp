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

#include "stainvar/translator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "stainvar/checkpoint.hpp"
#include "stainvar/error.hpp"
#include "stainvar/tensor_bridge.hpp"

namespace stainvar {

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.sizes().equals(b.sizes())) {
    throw ShapeError(std::string(what) + ": shape " + c10::str(a.sizes()) + " vs " +
                     c10::str(b.sizes()));
  }
}

}  // namespace

FeatureMap translate(const FeatureMap& fhat_he, TranslatorNetImpl& net) {
  ScopedEval eval(net);
  torch::NoGradGuard no_grad;
  torch::Tensor out;
  try {
    out = net.forward(to_tensor(fhat_he).unsqueeze(0));
  } catch (const c10::Error& e) {
    throw ShapeError(std::string("translator input rejected: ") + e.what_without_backtrace());
  }
  if (!torch::isfinite(out).all().item<bool>()) {
    throw NumericError("translator produced non-finite features");
  }
  return feature_map_from_tensor(out[0]);
}

torch::Tensor lsa_loss(const torch::Tensor& pred, const torch::Tensor& gt) {
  require_same_shape(pred, gt, "lsa_loss");
  return (pred - gt).abs().mean();
}

double lsa_loss(const FeatureMap& pred, const FeatureMap& gt) {
  return lsa_loss(to_tensor(pred), to_tensor(gt)).item<double>();
}

torch::Tensor isa_loss(const torch::Tensor& x_ihc, const torch::Tensor& decoded_pred) {
  require_same_shape(x_ihc, decoded_pred, "isa_loss");
  return (x_ihc - decoded_pred).abs().mean();
}

double isa_loss(const Image& x_ihc, const Image& decoded_pred) {
  return isa_loss(to_tensor(x_ihc), to_tensor(decoded_pred)).item<double>();
}

TranslatorData prepare_translator_data(VqModelImpl& vq_he, VqModelImpl& vq_ihc,
                                       const torch::Tensor& x_he, const torch::Tensor& x_ihc) {
  require_same_shape(x_he, x_ihc, "paired images");
  ScopedEval e1(vq_he), e2(vq_ihc);
  torch::NoGradGuard no_grad;
  TranslatorData d;
  auto f_he = vq_he.encoder(x_he);
  d.fhat_he = rvq::encode(f_he, vq_he.codebook, vq_he.config().schedule, *vq_he.projections)
                  .aggregate.detach();
  d.f_gt = vq_ihc.encoder(x_ihc).detach();
  d.x_ihc = x_ihc;
  return d;
}

void TranslatorTrainConfig::validate() const {
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(lr > 0.0)) throw InvalidArgument("lr must be > 0");
  if (!(lambda_trans >= 0.0)) throw InvalidArgument("lambda_trans must be >= 0");
  if (!use_lsa && !use_isa) throw InvalidArgument("translator needs at least one loss");
}

std::vector<std::string> frozen_digests(const std::vector<const torch::nn::Module*>& modules) {
  std::vector<std::string> out;
  for (const auto* m : modules) out.push_back(module_digest(*m));
  return out;
}

void require_unchanged(const std::vector<const torch::nn::Module*>& modules,
                       const std::vector<std::string>& before) {
  for (std::size_t i = 0; i < modules.size(); ++i) {
    if (module_digest(*modules[i]) != before.at(i)) {
      throw FrozenDriftError("frozen module " + modules[i]->name() + " (#" + std::to_string(i) +
                             ") changed during training");
    }
  }
}

TranslatorTrainResult train_translator(TranslatorNetImpl& net, DecoderNetImpl& frozen_decoder,
                                       const TranslatorData& data,
                                       const TranslatorTrainConfig& config,
                                       const std::vector<const torch::nn::Module*>& frozen,
                                       const ProgressFn& progress) {
  config.validate();
  require_same_shape(data.fhat_he, data.f_gt, "translator data");
  if (data.fhat_he.size(0) == 0) throw InvalidArgument("empty translator dataset");

  const auto before = frozen_digests(frozen);
  torch::manual_seed(config.seed);
  std::mt19937_64 rng(config.seed);

  ScopedEval decoder_eval(frozen_decoder);
  ScopedFreeze decoder_frozen(frozen_decoder);
  torch::optim::Adam opt(net.parameters(), torch::optim::AdamOptions(config.lr));

  const int n = static_cast<int>(data.fhat_he.size(0));
  const int per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const int total_steps = config.steps >= 0 ? config.steps : config.epochs * per_epoch;

  TranslatorTrainResult result;
  result.curve.names = {"lsa", "isa", "total"};
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  net.train();
  int step = 0;
  while (step < total_steps) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> sums(3, 0.0);
    int batches = 0;
    for (int b = 0; b < n && step < total_steps; b += config.batch_size, ++step) {
      const int e = std::min(n, b + config.batch_size);
      auto idx = torch::tensor(std::vector<int64_t>(order.begin() + b, order.begin() + e));
      auto fhat = data.fhat_he.index_select(0, idx);
      auto gt = data.f_gt.index_select(0, idx);
      auto x = data.x_ihc.index_select(0, idx);

      auto pred = net.forward(fhat);
      auto lsa = lsa_loss(pred, gt);
      auto isa = isa_loss(x, frozen_decoder.forward(pred));
      torch::Tensor total = torch::zeros({}, pred.options());
      if (config.use_lsa) total = total + lsa;
      if (config.use_isa) total = total + config.lambda_trans * isa;
      const double tv = total.item<double>();
      if (!std::isfinite(tv)) {
        throw NumericError("translator training diverged at step " + std::to_string(step));
      }
      opt.zero_grad();
      total.backward();
      opt.step();
      sums[0] += lsa.item<double>();
      sums[1] += isa.item<double>();
      sums[2] += tv;
      ++batches;
    }
    for (double& s : sums) s /= std::max(batches, 1);
    result.curve.rows.push_back(sums);
    if (progress) {
      progress("translator epoch " + std::to_string(result.curve.rows.size()) + " lsa " +
               std::to_string(sums[0]) + " isa " + std::to_string(sums[1]));
    }
  }
  result.steps = step;
  net.eval();
  require_unchanged(frozen, before);
  return result;
}

}  // namespace stainvar
