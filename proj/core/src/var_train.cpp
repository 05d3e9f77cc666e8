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

#include "stainvar/var_train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "stainvar/error.hpp"

namespace stainvar {

VarData prepare_var_data(VqModelImpl& vq_he, VqModelImpl& vq_ihc, TranslatorNetImpl& translator,
                         const torch::Tensor& x_he, const torch::Tensor& x_ihc) {
  auto td = prepare_translator_data(vq_he, vq_ihc, x_he, x_ihc);
  ScopedEval e1(vq_ihc), e2(translator);
  torch::NoGradGuard no_grad;
  VarData d;
  d.x_ihc = x_ihc;
  d.f_pred = translator.forward(td.fhat_he).detach();
  d.gt_tokens = rvq::encode(td.f_gt, vq_ihc.codebook, vq_ihc.config().schedule,
                            *vq_ihc.projections)
                    .indices;
  return d;
}

void VarTrainConfig::validate() const {
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(lr > 0.0) || !(decoder_lr > 0.0)) throw InvalidArgument("learning rates must be > 0");
  if (adv_start_step < 0) throw InvalidArgument("adv_start_step must be >= 0");
  weights.validate();
}

torch::Tensor straight_through_features(const std::vector<torch::Tensor>& logits,
                                        const torch::Tensor& codebook,
                                        const rvq::ProjectionsImpl& proj,
                                        const ScaleSchedule& schedule, Extent grid) {
  std::vector<torch::Tensor> z;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    const auto& l = logits[k];  // [N, n_k, V]
    const auto n = l.size(0);
    auto soft = torch::matmul(torch::softmax(l, -1), codebook);  // [N, n_k, C]
    auto hard = codebook.index_select(0, l.argmax(-1).reshape({-1})).view_as(soft);
    auto st = hard + soft - soft.detach();
    z.push_back(st.transpose(1, 2).reshape({n, codebook.size(1), schedule[k].h, schedule[k].w}));
  }
  return rvq::aggregate_embeddings(z, proj, grid);
}

namespace {

Extent grid_of(const torch::Tensor& f) {
  return {static_cast<int>(f.size(2)), static_cast<int>(f.size(3))};
}

}  // namespace

std::vector<double> evaluate_scale_ce(VarTransformerImpl& model, const VqModelImpl& vq_ihc,
                                      const VarData& data) {
  ScopedEval eval(model);
  torch::NoGradGuard no_grad;
  const auto& s = model.config().schedule;
  auto start = build_start_map(data.f_pred, s);
  auto ctx = global_context(data.f_pred);
  auto logits = forward_teacher_forced(model, data.gt_tokens, start, ctx, vq_ihc.codebook,
                                       *vq_ihc.projections, grid_of(data.f_pred));
  return per_scale_ce(logits, data.gt_tokens);
}

VarTrainResult train_var(VarTransformerImpl& model, DecoderNetImpl& decoder_ft,
                         DiscriminatorImpl& disc, VqModelImpl& vq_ihc, const VarData& data,
                         const VarTrainConfig& config,
                         const std::vector<const torch::nn::Module*>& frozen,
                         const ProgressFn& progress) {
  config.validate();
  const auto& s = model.config().schedule;
  if (!(s == vq_ihc.config().schedule)) {
    throw ScheduleError("transformer and IHC quantizer use different schedules");
  }
  if (data.f_pred.size(0) == 0) throw InvalidArgument("empty VAR dataset");
  const auto before = frozen_digests(frozen);

  VarTrainResult result;
  result.initial_scale_ce = evaluate_scale_ce(model, vq_ihc, data);

  torch::manual_seed(config.seed);
  std::mt19937_64 rng(config.seed);
  ScopedEval vq_eval(vq_ihc);
  ScopedFreeze vq_frozen(vq_ihc);

  std::vector<torch::Tensor> params = model.parameters();
  torch::optim::Adam opt(params, torch::optim::AdamOptions(config.lr));
  std::unique_ptr<torch::optim::Adam> opt_dec;
  std::unique_ptr<ScopedFreeze> dec_frozen;
  if (config.finetune_decoder) {
    opt_dec = std::make_unique<torch::optim::Adam>(decoder_ft.parameters(),
                                                   torch::optim::AdamOptions(config.decoder_lr));
  } else {
    dec_frozen = std::make_unique<ScopedFreeze>(decoder_ft);
  }
  torch::optim::Adam opt_d(disc.parameters(),
                           torch::optim::AdamOptions(config.lr).betas({0.5, 0.9}));

  const bool need_image = config.use_pixel || config.use_adv;
  const int n = static_cast<int>(data.f_pred.size(0));
  const int per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const int total_steps = config.steps >= 0 ? config.steps : config.epochs * per_epoch;
  const Extent grid = grid_of(data.f_pred);

  result.curve.names = {"ce", "pixel", "adv", "total", "disc_real", "disc_fake"};
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  model.train();
  decoder_ft.train(config.finetune_decoder);
  disc.train();
  int step = 0;
  while (step < total_steps) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> sums(result.curve.names.size(), 0.0);
    int batches = 0;
    for (int b = 0; b < n && step < total_steps; b += config.batch_size, ++step) {
      const int e = std::min(n, b + config.batch_size);
      auto idx = torch::tensor(std::vector<int64_t>(order.begin() + b, order.begin() + e));
      auto f_pred = data.f_pred.index_select(0, idx);
      auto x = data.x_ihc.index_select(0, idx);
      std::vector<torch::Tensor> gt;
      for (const auto& t : data.gt_tokens) gt.push_back(t.index_select(0, idx));

      auto logits = forward_teacher_forced(model, gt, build_start_map(f_pred, s),
                                           global_context(f_pred), vq_ihc.codebook,
                                           *vq_ihc.projections, grid);
      auto ce = ce_loss(logits, gt);
      LossWeights w = config.weights;
      if (!config.use_pixel) w.lambda_1 = 0.0;
      const bool adv_on = config.use_adv && step >= config.adv_start_step && w.lambda_2 > 0.0;
      if (!adv_on) w.lambda_2 = 0.0;

      torch::Tensor xhat, adv = torch::zeros({}, ce.options());
      if (need_image) {
        xhat = decoder_ft.forward(
            straight_through_features(logits, vq_ihc.codebook, *vq_ihc.projections, s, grid));
        if (adv_on) adv = generator_adversarial_loss(xhat, disc);
      } else {
        xhat = x;
      }
      auto terms = ar_objective(x, xhat, ce, adv, w);
      const double total = terms.total.item<double>();
      if (!std::isfinite(total)) {
        throw NumericError("VAR training diverged at step " + std::to_string(step));
      }
      opt.zero_grad();
      if (opt_dec) opt_dec->zero_grad();
      terms.total.backward();
      opt.step();
      if (opt_dec) opt_dec->step();

      double d_real = 0.0, d_fake = 0.0;
      if (adv_on) {
        opt_d.zero_grad();
        auto t = adversarial_losses(x, xhat.detach(), disc);
        t.discriminator.backward();
        opt_d.step();
        d_real = t.disc_real.item<double>();
        d_fake = t.disc_fake.item<double>();
      }
      const double vals[] = {ce.item<double>(), terms.pixel.item<double>(), adv.item<double>(),
                             total, d_real, d_fake};
      for (std::size_t i = 0; i < sums.size(); ++i) sums[i] += vals[i];
      ++batches;
    }
    for (double& v : sums) v /= std::max(batches, 1);
    result.curve.rows.push_back(sums);
    if (progress) {
      progress("var epoch " + std::to_string(result.curve.rows.size()) + " ce " +
               std::to_string(sums[0]) + " pixel " + std::to_string(sums[1]));
    }
  }
  result.steps = step;
  model.eval();
  decoder_ft.eval();
  disc.eval();
  result.final_scale_ce = evaluate_scale_ce(model, vq_ihc, data);
  require_unchanged(frozen, before);
  return result;
}

}  // namespace stainvar
