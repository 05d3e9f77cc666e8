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

#include "stainvar/vqvae.hpp"


#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "stainvar/error.hpp"
#include "stainvar/perceptual.hpp"
#include "stainvar/tensor_bridge.hpp"

namespace stainvar {

namespace F = torch::nn::functional;

void VqConfig::validate() const {
  net.validate();
  if (codebook_size < 2 || codebook_size > 65536) {
    throw InvalidArgument("codebook_size must be in [2, 65536]");
  }
  if (schedule.empty()) throw InvalidArgument("scale schedule is empty");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw InvalidArgument("ema_decay must be in [0,1)");
}

VqModelImpl::VqModelImpl(const VqConfig& config) : config_(config) {
  config_.validate();
  const int c = config_.net.latent_channels;
  const int v = config_.codebook_size;
  encoder = register_module("encoder", EncoderNet(config_.net));
  decoder = register_module("decoder", DecoderNet(config_.net));
  projections = register_module(
      "projections", rvq::Projections(static_cast<int>(config_.schedule.size()), c));
  codebook = register_buffer("codebook", torch::randn({v, c}) * 0.1);
  ema_count = register_buffer("ema_count", torch::ones({v}));
  ema_sum = register_buffer("ema_sum", codebook.clone());
  usage = register_buffer("usage", torch::zeros({v}));
}

Extent VqModelImpl::latent_extent(Extent image) const {
  const int p = config_.net.patch_size();
  if (image.h % p != 0 || image.w % p != 0) {
    throw ShapeError("image side " + std::to_string(image.h) + "x" + std::to_string(image.w) +
                     " is not a multiple of the patch size " + std::to_string(p));
  }
  return {image.h / p, image.w / p};
}

VqForward VqModelImpl::forward(const torch::Tensor& x) {
  VqForward out;
  out.features = encoder(x);
  out.encoding = rvq::encode(out.features, codebook, config_.schedule, *projections);
  out.decoder_input = out.encoding.aggregate + (out.features - out.features.detach());
  out.reconstruction = decoder(out.decoder_input);
  return out;
}

torch::Tensor VqModelImpl::reconstruct(const torch::Tensor& x) {
  torch::NoGradGuard no_grad;
  auto f = encoder(x);
  auto enc = rvq::encode(f, codebook, config_.schedule, *projections);
  return decoder(enc.aggregate);
}

void VqModelImpl::ema_update(const rvq::BatchEncoding& encoding) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> xs, is;
  for (std::size_t k = 0; k < encoding.indices.size(); ++k) {
    const auto& q = encoding.quantizer_inputs[k];
    xs.push_back(q.permute({0, 2, 3, 1}).reshape({-1, q.size(1)}));
    is.push_back(encoding.indices[k].reshape({-1}));
  }
  auto x = torch::cat(xs).to(codebook.scalar_type());
  auto idx = torch::cat(is);
  const auto v = codebook.size(0);
  auto counts = torch::zeros({v}, codebook.options()).index_add_(0, idx, torch::ones({idx.size(0)}, codebook.options()));
  auto sums = torch::zeros_like(codebook).index_add_(0, idx, x);
  auto used = counts > 0;
  const double d = config_.ema_decay;
  ema_count.copy_(torch::where(used, d * ema_count + (1.0 - d) * counts, ema_count));
  auto used2 = used.unsqueeze(1);
  ema_sum.copy_(torch::where(used2, d * ema_sum + (1.0 - d) * sums, ema_sum));
  codebook.copy_(torch::where(used2, ema_sum / ema_count.unsqueeze(1), codebook));
  usage.add_(counts);
}

int VqModelImpl::restart_dead_codes(const torch::Tensor& pool) {
  torch::NoGradGuard no_grad;
  auto dead = torch::nonzero(usage == 0).reshape({-1});
  const auto n = dead.size(0);
  usage.zero_();
  if (n == 0 || pool.size(0) == 0) return 0;
  auto p = pool.to(codebook.scalar_type());
  auto rows = torch::randint(0, p.size(0), {n}, torch::kLong);
  auto jitter = torch::randn({n, p.size(1)}, codebook.options()) * (p.std().item<double>() * 1e-2 + 1e-6);
  auto fresh = p.index_select(0, rows) + jitter;
  codebook.index_copy_(0, dead, fresh);
  ema_sum.index_copy_(0, dead, fresh);
  ema_count.index_fill_(0, dead, 1.0);
  return static_cast<int>(n);
}

Codebook VqModelImpl::codebook_value() const {
  return codebook_from_tensor(codebook);
}

std::uint64_t VqModelImpl::codebook_hash() const { return codebook_value().content_hash(); }

FeatureMap encode_image(const Image& x, EncoderNetImpl& encoder) {
  ScopedEval eval(encoder);
  torch::NoGradGuard no_grad;
  auto f = encoder.forward(to_tensor(x).unsqueeze(0));
  if (!torch::isfinite(f).all().item<bool>()) {
    throw NumericError("encoder produced non-finite activations");
  }
  return feature_map_from_tensor(f[0]);
}

Image decode_features(const FeatureMap& fhat, DecoderNetImpl& decoder) {
  if (fhat.channels() != decoder.latent_channels()) {
    throw ShapeError("decoder expects " + std::to_string(decoder.latent_channels()) +
                     " channels, got " + std::to_string(fhat.channels()));
  }
  ScopedEval eval(decoder);
  torch::NoGradGuard no_grad;
  auto x = decoder.forward(to_tensor(fhat).unsqueeze(0));
  return image_from_tensor(x[0]);
}

namespace {

torch::Tensor head_mean(const std::vector<torch::Tensor>& logits, bool real_side) {
  torch::Tensor sum;
  for (const auto& l : logits) {
    auto term = F::softplus(real_side ? -l : l).mean();
    sum = sum.defined() ? sum + term : term;
  }
  return sum / static_cast<double>(logits.size());
}

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.sizes().equals(b.sizes())) {
    throw ShapeError(std::string(what) + ": shape " + c10::str(a.sizes()) + " vs " +
                     c10::str(b.sizes()));
  }
}

}  // namespace

torch::Tensor generator_adversarial_loss(const torch::Tensor& fake, DiscriminatorImpl& disc) {
  return head_mean(disc.forward(fake).logits, /*real_side=*/true);
}

torch::Tensor discriminator_adversarial_loss(const torch::Tensor& real, const torch::Tensor& fake,
                                             DiscriminatorImpl& disc) {
  return head_mean(disc.forward(real.detach()).logits, true) +
         head_mean(disc.forward(fake.detach()).logits, false);
}

AdversarialTerms adversarial_losses(const torch::Tensor& real, const torch::Tensor& fake,
                                    DiscriminatorImpl& disc) {
  require_same_shape(real, fake, "adversarial_losses");
  AdversarialTerms t;
  t.generator = generator_adversarial_loss(fake, disc);
  t.disc_real = head_mean(disc.forward(real.detach()).logits, true);
  t.disc_fake = head_mean(disc.forward(fake.detach()).logits, false);
  t.discriminator = t.disc_real + t.disc_fake;
  return t;
}

VqLossTerms vq_loss_terms(const torch::Tensor& x, const torch::Tensor& xhat, const torch::Tensor& f,
                          const torch::Tensor& fhat, DiscriminatorImpl& disc,
                          const LossWeights& weights) {
  require_same_shape(x, xhat, "vq_loss images");
  require_same_shape(f, fhat, "vq_loss features");
  VqLossTerms t;
  t.rec = (x - xhat).abs().mean();
  t.feat = (f.detach() - fhat).abs().mean();
  t.perceptual = perceptual::distance(xhat, x);
  t.adv = generator_adversarial_loss(xhat, disc);
  t.total = t.rec + t.feat + weights.lambda_p * t.perceptual + weights.lambda_adv * t.adv;
  return t;
}

VqLossReport vq_loss(const Image& x, const Image& xhat, const FeatureMap& f, const FeatureMap& fhat,
                     DiscriminatorImpl& disc, const LossWeights& weights) {
  weights.validate();
  torch::NoGradGuard no_grad;
  ScopedEval eval(disc);
  auto t = vq_loss_terms(to_tensor(x).unsqueeze(0), to_tensor(xhat).unsqueeze(0),
                         to_tensor(f).unsqueeze(0), to_tensor(fhat).unsqueeze(0), disc, weights);
  VqLossReport r;
  r.rec = t.rec.item<double>();
  r.feat = t.feat.item<double>();
  r.perceptual = t.perceptual.item<double>();
  r.adv = t.adv.item<double>();
  r.total = r.rec + r.feat + weights.lambda_p * r.perceptual + weights.lambda_adv * r.adv;
  return r;
}

void LossCurve::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "epoch";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  out.precision(9);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << i;
    for (double v : rows[i]) out << ',' << v;
    out << '\n';
  }
}

void VqTrainConfig::validate() const {
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(lr > 0.0)) throw InvalidArgument("lr must be > 0");
  if (restart_interval < 0 || adv_start_step < 0) throw InvalidArgument("negative step count");
  weights.validate();
}

VqTrainResult train_vqvae(VqModelImpl& model, DiscriminatorImpl& disc, const torch::Tensor& images,
                          const VqTrainConfig& config, const ProgressFn& progress) {
  config.validate();
  if (images.dim() != 4 || images.size(0) == 0) {
    throw InvalidArgument("train_vqvae needs a non-empty [N,3,S,S] image batch");
  }
  torch::manual_seed(config.seed);
  std::mt19937_64 rng(config.seed);

  const int n = static_cast<int>(images.size(0));
  const int per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const int total_steps = config.steps >= 0 ? config.steps : config.epochs * per_epoch;

  auto adam = [&](std::vector<torch::Tensor> params) {
    return torch::optim::Adam(std::move(params), torch::optim::AdamOptions(config.lr).betas(
                                                     {config.beta1, config.beta2}));
  };
  auto opt_g = adam(model.parameters());
  auto opt_d = adam(disc.parameters());

  VqTrainResult result;
  result.curve.names = {"rec", "feat", "perceptual", "adv", "total", "disc_real", "disc_fake"};
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  model.train();
  disc.train();
  int step = 0;
  while (step < total_steps) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> sums(result.curve.names.size(), 0.0);
    int batches = 0;
    for (int b = 0; b < n && step < total_steps; b += config.batch_size, ++step) {
      const int e = std::min(n, b + config.batch_size);
      auto idx = torch::tensor(std::vector<int64_t>(order.begin() + b, order.begin() + e));
      auto x = images.index_select(0, idx);

      LossWeights w = config.weights;
      const bool adv_on = step >= config.adv_start_step && w.lambda_adv > 0.0;
      if (!adv_on) w.lambda_adv = 0.0;

      auto out = model.forward(x);
      auto terms = vq_loss_terms(x, out.reconstruction, out.features, out.encoding.aggregate,
                                 disc, w);
      const double total = terms.total.item<double>();
      if (!std::isfinite(total)) {
        throw NumericError("VQ-VAE training diverged at step " + std::to_string(step) +
                           ": total loss is " + std::to_string(total));
      }
      opt_g.zero_grad();
      terms.total.backward();
      opt_g.step();

      double d_real = 0.0, d_fake = 0.0;
      if (adv_on) {
        opt_d.zero_grad();
        auto dr = head_mean(disc.forward(x).logits, true);
        auto df = head_mean(disc.forward(out.reconstruction.detach()).logits, false);
        (dr + df).backward();
        opt_d.step();
        d_real = dr.item<double>();
        d_fake = df.item<double>();
      }

      model.ema_update(out.encoding);
      if (config.restart_interval > 0 && step % config.restart_interval == 0) {
        std::vector<torch::Tensor> pool;
        for (const auto& q : out.encoding.quantizer_inputs) {
          pool.push_back(q.permute({0, 2, 3, 1}).reshape({-1, q.size(1)}));
        }
        model.restart_dead_codes(torch::cat(pool));
      }

      const double vals[] = {terms.rec.item<double>(), terms.feat.item<double>(),
                             terms.perceptual.item<double>(), terms.adv.item<double>(),
                             total, d_real, d_fake};
      for (std::size_t i = 0; i < sums.size(); ++i) sums[i] += vals[i];
      result.step_rec.push_back(vals[0]);
      ++batches;
    }
    for (double& s : sums) s /= std::max(batches, 1);
    result.curve.rows.push_back(sums);
    if (progress) {
      progress("vq epoch " + std::to_string(result.curve.rows.size()) + " rec " +
               std::to_string(sums[0]) + " total " + std::to_string(sums[4]));
    }
  }
  result.steps = step;
  model.eval();
  disc.eval();
  return result;
}

}  // namespace stainvar
