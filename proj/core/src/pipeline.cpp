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

#include "stainvar/pipeline.hpp"

#include <cstdio>
#include <fstream>

#include "stainvar/error.hpp"
#include "stainvar/image_metrics.hpp"
#include "stainvar/runtime.hpp"
#include "stainvar/tensor_bridge.hpp"

namespace stainvar {

namespace {

using json = nlohmann::json;

Extent grid_of(const torch::Tensor& f) {
  return {static_cast<int>(f.size(2)), static_cast<int>(f.size(3))};
}

template <typename M>
void copy_weights(const torch::nn::Module& from, M& to) {
  Checkpoint ck;
  ck.put_module("m", from);
  ck.load_module("m", *to);
}

VarConfig var_config_for(const PipelineConfig& config, const StageOptions& options) {
  VarConfig v = config.var;
  v.use_global_context = options.use_global_context;
  v.use_start_map = options.use_start_map;
  return v;
}

}  // namespace

std::uint64_t stage_seed(std::uint64_t seed, int stage) noexcept {
  return pair_seed(seed, 2, stage);
}

torch::Tensor stack_images(const std::vector<SyntheticPair>& pairs, bool ihc) {
  std::vector<Image> images;
  images.reserve(pairs.size());
  for (const auto& p : pairs) images.push_back(ihc ? p.x_ihc : p.x_he);
  return to_batch(images);
}

VqBundle make_vq(const PipelineConfig& config, std::uint64_t seed) {
  torch::manual_seed(seed);
  VqBundle b;
  b.model = VqModel(config.vq);
  b.disc = Discriminator(config.vq.net.disc_channels, config.vq.net.groups);
  b.model->eval();
  b.disc->eval();
  return b;
}

VqBundle train_vq_stage(const PipelineConfig& config, const torch::Tensor& images,
                        std::uint64_t seed, VqTrainResult* result, const ProgressFn& progress) {
  auto b = make_vq(config, seed);
  VqTrainConfig t = config.vq_train;
  t.seed = seed;
  auto r = train_vqvae(*b.model, *b.disc, images, t, progress);
  if (result) *result = std::move(r);
  return b;
}

TranslatorNet train_translator_stage(const PipelineConfig& config, VqBundle& he, VqBundle& ihc,
                                     const torch::Tensor& x_he, const torch::Tensor& x_ihc,
                                     const StageOptions& options, std::uint64_t seed,
                                     TranslatorTrainResult* result, const ProgressFn& progress) {
  torch::manual_seed(seed);
  TranslatorNet net(config.vq.net.latent_channels, config.translator_width, config.vq.net.groups);
  auto data = prepare_translator_data(*he.model, *ihc.model, x_he, x_ihc);
  TranslatorTrainConfig t = config.translator_train;
  t.seed = seed;
  t.use_lsa = options.use_lsa;
  t.use_isa = options.use_isa;
  auto r = train_translator(*net, *ihc.model->decoder, data, t,
                            {he.model.get(), ihc.model.get()}, progress);
  if (result) *result = std::move(r);
  return net;
}

VarStage train_var_stage(const PipelineConfig& config, VqBundle& he, VqBundle& ihc,
                         TranslatorNetImpl& translator, const torch::Tensor& x_he,
                         const torch::Tensor& x_ihc, const StageOptions& options,
                         std::uint64_t seed, const ProgressFn& progress) {
  torch::manual_seed(seed);
  VarStage s;
  s.var = VarTransformer(var_config_for(config, options));
  s.decoder_ft = DecoderNet(config.vq.net);
  copy_weights(*ihc.model->decoder, s.decoder_ft);
  s.disc = Discriminator(config.vq.net.disc_channels, config.vq.net.groups);
  copy_weights(*ihc.disc, s.disc);

  auto data = prepare_var_data(*he.model, *ihc.model, translator, x_he, x_ihc);
  VarTrainConfig t = config.var_train;
  t.seed = seed;
  t.finetune_decoder = options.finetune_decoder;
  t.use_adv = options.use_adv;
  t.use_pixel = options.use_pixel;
  s.result = train_var(*s.var, *s.decoder_ft, *s.disc, *ihc.model, data, t,
                       {he.model.get(), ihc.model.get(), &translator}, progress);
  return s;
}

torch::Tensor infer_batch(PipelineModels& m, const torch::Tensor& x_he,
                          const SamplingStrategy& strategy, std::uint64_t seed,
                          std::vector<torch::Tensor>* tokens) {
  ScopedEval e1(*m.he.model), e2(*m.ihc.model), e3(*m.translator), e4(*m.var), e5(*m.decoder_ft);
  torch::NoGradGuard no_grad;
  auto& he = *m.he.model;
  auto& ihc = *m.ihc.model;
  auto f = he.encoder(x_he);
  auto fhat = rvq::encode(f, he.codebook, he.config().schedule, *he.projections).aggregate;
  auto f_pred = m.translator->forward(fhat);
  const auto& s = m.var->config().schedule;
  std::mt19937_64 rng(seed);
  auto toks = generate_tokens(*m.var, build_start_map(f_pred, s), global_context(f_pred),
                              ihc.codebook, *ihc.projections, grid_of(f_pred), strategy, rng);
  auto out = m.decoder_ft->forward(
      rvq::aggregate_indices(toks, ihc.codebook, *ihc.projections, grid_of(f_pred)));
  if (!torch::isfinite(out).all().item<bool>()) throw NumericError("inference produced non-finite pixels");
  if (tokens) *tokens = std::move(toks);
  return out;
}

Image infer(const Image& x_he, PipelineModels& models, const SamplingStrategy& strategy,
            std::uint64_t seed) {
  auto out = infer_batch(models, to_tensor(x_he).unsqueeze(0), strategy, seed);
  return image_from_tensor(out[0]);
}

torch::Tensor translate_decode_batch(PipelineModels& m, const torch::Tensor& x_he) {
  ScopedEval e1(*m.he.model), e2(*m.ihc.model), e3(*m.translator);
  torch::NoGradGuard no_grad;
  auto& he = *m.he.model;
  auto f = he.encoder(x_he);
  auto fhat = rvq::encode(f, he.codebook, he.config().schedule, *he.projections).aggregate;
  return m.ihc.model->decoder->forward(m.translator->forward(fhat));
}

ImageQuality image_quality(const std::vector<Image>& pred, const std::vector<Image>& gt) {
  if (pred.size() != gt.size() || pred.empty()) {
    throw ShapeError("image_quality needs equally many, non-zero predictions and references");
  }
  ImageQuality q;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    q.psnr.push_back(psnr(pred[i], gt[i]));
    q.ssim.push_back(ssim(pred[i], gt[i]));
    q.proxy.push_back(perceptual_proxy(pred[i], gt[i]));
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  q.mean_psnr = mean(q.psnr);
  q.mean_ssim = mean(q.ssim);
  q.mean_proxy = mean(q.proxy);
  return q;
}

ImageQuality image_quality(const torch::Tensor& pred, const torch::Tensor& gt) {
  std::vector<Image> a, b;
  for (int64_t i = 0; i < pred.size(0); ++i) {
    a.push_back(image_from_tensor(pred[i]));
    b.push_back(image_from_tensor(gt[i]));
  }
  return image_quality(a, b);
}

int reference_her2_score(const NucleiCounts& c) {
  if (c.n_total == 0 || static_cast<double>(c.positives()) < 0.1 * static_cast<double>(c.n_total)) {
    return 0;
  }
  if (c.n3 >= c.n2 && c.n3 >= c.n1) return 3;
  if (c.n2 >= c.n1) return 2;
  return 1;
}

std::vector<PatchRow> patch_rows_from_images(const std::vector<SyntheticPair>& pairs,
                                             const std::vector<Image>& predicted,
                                             const DabThresholds& thresholds) {
  if (pairs.size() != predicted.size()) throw ShapeError("one prediction per pair expected");
  auto mean_positive = [&](const std::vector<double>& dab) -> std::optional<double> {
    double s = 0.0;
    int n = 0;
    for (double v : dab) {
      if (v >= thresholds.t1) {
        s += v;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return s / n;
  };
  std::vector<PatchRow> rows;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& pair = pairs[i];
    if (pair.counts.n_total == 0) continue;
    const auto dab = measure_dab(predicted[i], pair.nuclei);
    PatchRow r;
    char id[32];
    std::snprintf(id, sizeof id, "pair_%04zu", i);
    r.patch_id = id;
    r.counts = stratify_nuclei(dab, thresholds);
    r.counts.n_total = pair.counts.n_total;
    r.mean_positive_dab = mean_positive(dab);
    r.her2_score = reference_her2_score(r.counts);
    const auto gt = score_patch(pair.counts, thresholds, mean_positive(pair.dab_intensities()));
    r.gt_h_score = gt.h_score;
    r.gt_ki67_pct = gt.ki67_pct;
    r.gt_allred_total = gt.allred.total;
    r.gt_her2_score = reference_her2_score(pair.counts);
    rows.push_back(r);
  }
  return rows;
}

Checkpoint vq_checkpoint(const VqBundle& vq, const PipelineConfig& config,
                         const std::string& modality) {
  Checkpoint ck;
  ck.metadata = {{"stage", "vq"},
                 {"modality", modality},
                 {"config", to_json(config)},
                 {"codebook_hash", vq.model->codebook_hash()},
                 {"digest", module_digest(*vq.model)}};
  ck.put_module("model", *vq.model);
  ck.put_module("disc", *vq.disc);
  return ck;
}

VqBundle vq_from_checkpoint(const Checkpoint& ck, PipelineConfig* config) {
  if (ck.metadata.value("stage", "") != "vq") {
    throw FormatError(FormatErrorKind::kMalformed, "not a VQ checkpoint");
  }
  auto cfg = config_from_json(ck.metadata.at("config"));
  auto b = make_vq(cfg, 0);
  ck.load_module("model", *b.model);
  ck.load_module("disc", *b.disc);
  if (b.model->codebook_hash() != ck.metadata.at("codebook_hash").get<std::uint64_t>()) {
    throw HashMismatchError("VQ checkpoint codebook does not match its recorded hash");
  }
  if (config) *config = cfg;
  return b;
}

Checkpoint translator_checkpoint(TranslatorNetImpl& translator, const VqBundle& he,
                                 const VqBundle& ihc, const PipelineConfig& config) {
  Checkpoint ck;
  ck.metadata = {{"stage", "translator"},
                 {"config", to_json(config)},
                 {"digest", module_digest(translator)},
                 {"upstream",
                  {{"vq_he", module_digest(*he.model)},
                   {"vq_ihc", module_digest(*ihc.model)},
                   {"he_codebook_hash", he.model->codebook_hash()},
                   {"ihc_codebook_hash", ihc.model->codebook_hash()}}}};
  ck.put_module("translator", translator);
  return ck;
}

Checkpoint var_checkpoint(const VarStage& stage, TranslatorNetImpl& translator, const VqBundle& he,
                          const VqBundle& ihc, const PipelineConfig& config) {
  Checkpoint ck;
  const auto& vc = stage.var->config();
  ck.metadata = {{"stage", "var"},
                 {"config", to_json(config)},
                 {"options",
                  {{"use_global_context", vc.use_global_context},
                   {"use_start_map", vc.use_start_map}}},
                 {"upstream",
                  {{"vq_he", module_digest(*he.model)},
                   {"vq_ihc", module_digest(*ihc.model)},
                   {"translator", module_digest(translator)},
                   {"ihc_codebook_hash", ihc.model->codebook_hash()}}}};
  ck.put_module("var", *stage.var);
  ck.put_module("decoder_ft", *stage.decoder_ft);
  ck.put_module("disc_ft", *stage.disc);
  return ck;
}

namespace {

Checkpoint load_stage(const std::filesystem::path& path, const std::string& what) {
  if (!std::filesystem::exists(path)) {
    throw MissingPrerequisiteError("missing " + what + " checkpoint (" + path.string() + ")");
  }
  return load_checkpoint(path);
}

void expect_digest(const json& upstream, const char* key, const std::string& actual,
                   const std::string& what) {
  if (upstream.at(key).get<std::string>() != actual) {
    throw HashMismatchError(what + " was trained against different " + key + " weights");
  }
}

}  // namespace

VqBundle load_vq_stage(const std::filesystem::path& dir, const std::string& modality,
                       PipelineConfig* config) {
  const auto file = modality == "he" ? kVqHeFile : kVqIhcFile;
  auto ck = load_stage(dir / file, "VQ");
  if (ck.metadata.value("modality", "") != modality) {
    throw FormatError(FormatErrorKind::kMalformed, std::string(file) + " holds the wrong modality");
  }
  return vq_from_checkpoint(ck, config);
}

TranslatorNet load_translator_stage(const std::filesystem::path& dir, const VqBundle& he,
                                    const VqBundle& ihc) {
  auto ck = load_stage(dir / kTranslatorFile, "translator");
  const auto& up = ck.metadata.at("upstream");
  if (up.at("ihc_codebook_hash").get<std::uint64_t>() != ihc.model->codebook_hash() ||
      up.at("he_codebook_hash").get<std::uint64_t>() != he.model->codebook_hash()) {
    throw HashMismatchError("translator checkpoint: codebook hash mismatch");
  }
  expect_digest(up, "vq_he", module_digest(*he.model), "translator");
  expect_digest(up, "vq_ihc", module_digest(*ihc.model), "translator");
  auto cfg = config_from_json(ck.metadata.at("config"));
  TranslatorNet net(cfg.vq.net.latent_channels, cfg.translator_width, cfg.vq.net.groups);
  ck.load_module("translator", *net);
  net->eval();
  return net;
}

PipelineModels load_pipeline(const std::filesystem::path& dir) {
  PipelineModels m;
  m.he = load_vq_stage(dir, "he");
  m.ihc = load_vq_stage(dir, "ihc");
  m.translator = load_translator_stage(dir, m.he, m.ihc);
  auto ck = load_stage(dir / kVarFile, "VAR");
  const auto& up = ck.metadata.at("upstream");
  if (up.at("ihc_codebook_hash").get<std::uint64_t>() != m.ihc.model->codebook_hash()) {
    throw HashMismatchError("VAR checkpoint: codebook hash mismatch");
  }
  expect_digest(up, "vq_he", module_digest(*m.he.model), "VAR");
  expect_digest(up, "vq_ihc", module_digest(*m.ihc.model), "VAR");
  expect_digest(up, "translator", module_digest(*m.translator), "VAR");
  m.config = config_from_json(ck.metadata.at("config"));
  StageOptions opts;
  opts.use_global_context = ck.metadata.at("options").at("use_global_context").get<bool>();
  opts.use_start_map = ck.metadata.at("options").at("use_start_map").get<bool>();
  m.var = VarTransformer(var_config_for(m.config, opts));
  ck.load_module("var", *m.var);
  m.decoder_ft = DecoderNet(m.config.vq.net);
  ck.load_module("decoder_ft", *m.decoder_ft);
  m.var->eval();
  m.decoder_ft->eval();
  return m;
}

json make_manifest(const std::string& command, const PipelineConfig& config,
                   const std::map<std::string, std::filesystem::path>& artifacts) {
  json files = json::object();
  for (const auto& [name, path] : artifacts) {
    files[name] = {{"path", path.filename().string()},
                   {"sha256", sha256_hex(read_file_bytes(path))}};
  }
  return {{"command", command},
          {"revision", build_revision()},
          {"seed", config.seed},
          {"config", to_json(config)},
          {"artifacts", files}};
}

void write_json(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace stainvar
