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

#include "stainvar/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "stainvar/error.hpp"

namespace stainvar {

namespace {

using json = nlohmann::json;

// Reads keys out of one JSON object, tracking which were consumed so that
// leftovers can be reported by name.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(full(key), "has the wrong type");
    }
  }

  Section sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    static const json empty = json::object();
    return Section(it == j_.end() ? empty : *it, full(key));
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }
  std::string full(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(full(it.key()), "is not a recognised key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename F>
void checked(const std::string& key, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(key, e.what());
  }
}

}  // namespace

json schedule_to_json(const ScaleSchedule& s) {
  json out = json::array();
  for (const auto& e : s.scales()) out.push_back({e.h, e.w});
  return out;
}

ScaleSchedule schedule_from_json(const json& j, const std::string& key) {
  if (!j.is_array()) throw ConfigError(key, "expected a list of [h, w] pairs");
  std::vector<Extent> scales;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer()) {
      throw ConfigError(key, "expected a list of [h, w] pairs");
    }
    scales.push_back({e[0].get<int>(), e[1].get<int>()});
  }
  return ScaleSchedule(std::move(scales));
}

const std::vector<std::string>& ablation_arm_names() {
  static const std::vector<std::string> names = {
      "full",         "w/o VAR",      "w/o L_LSA",      "w/o L_ISA",
      "w/o D^FT",     "w/o L_adv",    "w/o L_pixel",    "w/o f_global",
      "w/o 3S-Map",   "w/o multi-scale", "w/o registration"};
  return names;
}

PipelineConfig PipelineConfig::defaults() {
  PipelineConfig c;
  c.data.params.image_size = 64;
  c.vq.net.base_channels = 16;
  c.vq.net.latent_channels = 32;
  c.vq.net.downsample_blocks = 3;
  c.vq.net.disc_channels = 16;
  c.vq.codebook_size = 512;
  c.vq.schedule = ScaleSchedule::dense(4, 8);
  c.var.dim = 128;
  c.var.layers = 4;
  c.var.heads = 4;
  c.vq_train.epochs = 60;
  c.translator_train.epochs = 100;
  c.var_train.epochs = 200;
  c.ablation.schedules = {{"dense 1-8", ScaleSchedule::dense(1, 8)},
                          {"(1,2,4,8)", ScaleSchedule::squares({1, 2, 4, 8})}};
  c.finalize();
  return c;
}

Extent PipelineConfig::latent_grid() const {
  const int p = vq.net.patch_size();
  return {data.params.image_size / p, data.params.image_size / p};
}

void PipelineConfig::finalize() {
  checked("weights", [&] { weights.validate(); });
  vq_train.weights = weights;
  var_train.weights = weights;
  translator_train.lambda_trans = weights.lambda_trans;
  var.vocab_size = vq.codebook_size;
  var.channels = vq.net.latent_channels;
  var.schedule = vq.schedule;
  vq_train.seed = seed;
  translator_train.seed = seed;
  var_train.seed = seed;
  checked("data", [&] { data.params.validate(); });
  if (data.params.image_size % vq.net.patch_size() != 0) {
    throw ConfigError("data.image_size", "must be a multiple of the patch size " +
                                             std::to_string(vq.net.patch_size()));
  }
  checked("vq", [&] { vq.validate(); });
  const auto violations = validate_schedule(vq.schedule, latent_grid());
  if (!violations.empty()) throw ConfigError("vq.schedule", violations.front().message);
  checked("vq", [&] { vq_train.validate(); });
  checked("translator", [&] { translator_train.validate(); });
  if (translator_width < 1) throw ConfigError("translator.width", "must be >= 1");
  checked("var", [&] { var.validate(); });
  checked("var", [&] { var_train.validate(); });
  checked("sampling", [&] { sampling.validate(var.vocab_size); });
  if (ablation.seeds.empty()) throw ConfigError("ablation.seeds", "must not be empty");
  if (!(ablation.misalignment_magnitude >= 0.0)) {
    throw ConfigError("ablation.misalignment_magnitude", "must be >= 0");
  }
  const auto& known = ablation_arm_names();
  for (const auto& arm : ablation.arms) {
    if (std::find(known.begin(), known.end(), arm) == known.end()) {
      throw ConfigError("ablation.arms", "unknown arm '" + arm + "'");
    }
  }
  for (const auto& [name, s] : ablation.schedules) {
    const auto v = validate_schedule(s, latent_grid());
    if (!v.empty()) throw ConfigError("ablation.schedules." + name, v.front().message);
  }
}

json to_json(const PipelineConfig& c) {
  const auto& p = c.data.params;
  json sched = json::array();
  for (const auto& [name, s] : c.ablation.schedules) {
    sched.push_back({{"name", name}, {"scales", schedule_to_json(s)}});
  }
  std::string strategy = "greedy";
  if (c.sampling.kind == SamplingStrategy::Kind::kTemperature) strategy = "temperature";
  if (c.sampling.kind == SamplingStrategy::Kind::kTopK) strategy = "top_k";
  return {
      {"seed", c.seed},
      {"data",
       {{"train_pairs", c.data.train_pairs},
        {"eval_pairs", c.data.eval_pairs},
        {"seed", c.data.seed},
        {"image_size", p.image_size},
        {"n_nuclei", p.n_nuclei},
        {"positivity_rate", p.positivity_rate},
        {"texture_scale", p.texture_scale},
        {"clusters", p.clusters},
        {"morphology_coupling", p.morphology_coupling},
        {"dab_thresholds", {p.thresholds.t1, p.thresholds.t2, p.thresholds.t3}}}},
      {"vq",
       {{"base_channels", c.vq.net.base_channels},
        {"latent_channels", c.vq.net.latent_channels},
        {"downsample_blocks", c.vq.net.downsample_blocks},
        {"max_channel_mult", c.vq.net.max_channel_mult},
        {"res_blocks", c.vq.net.res_blocks},
        {"groups", c.vq.net.groups},
        {"dropout", c.vq.net.dropout},
        {"disc_channels", c.vq.net.disc_channels},
        {"codebook_size", c.vq.codebook_size},
        {"schedule", schedule_to_json(c.vq.schedule)},
        {"ema_decay", c.vq.ema_decay},
        {"epochs", c.vq_train.epochs},
        {"steps", c.vq_train.steps},
        {"batch_size", c.vq_train.batch_size},
        {"lr", c.vq_train.lr},
        {"beta1", c.vq_train.beta1},
        {"beta2", c.vq_train.beta2},
        {"restart_interval", c.vq_train.restart_interval},
        {"adv_start_step", c.vq_train.adv_start_step}}},
      {"translator",
       {{"width", c.translator_width},
        {"epochs", c.translator_train.epochs},
        {"steps", c.translator_train.steps},
        {"batch_size", c.translator_train.batch_size},
        {"lr", c.translator_train.lr}}},
      {"var",
       {{"dim", c.var.dim},
        {"layers", c.var.layers},
        {"heads", c.var.heads},
        {"mlp_ratio", c.var.mlp_ratio},
        {"dropout", c.var.dropout},
        {"epochs", c.var_train.epochs},
        {"steps", c.var_train.steps},
        {"batch_size", c.var_train.batch_size},
        {"lr", c.var_train.lr},
        {"decoder_lr", c.var_train.decoder_lr},
        {"adv_start_step", c.var_train.adv_start_step}}},
      {"weights",
       {{"lambda_p", c.weights.lambda_p},
        {"lambda_adv", c.weights.lambda_adv},
        {"lambda_trans", c.weights.lambda_trans},
        {"lambda_1", c.weights.lambda_1},
        {"lambda_2", c.weights.lambda_2}}},
      {"sampling",
       {{"strategy", strategy},
        {"temperature", c.sampling.temperature},
        {"top_k", c.sampling.top_k}}},
      {"ablation",
       {{"seeds", c.ablation.seeds},
        {"misalignment_magnitude", c.ablation.misalignment_magnitude},
        {"arms", c.ablation.arms},
        {"schedules", sched}}},
  };
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c = PipelineConfig::defaults();
  Section root(j, "");
  root.read("seed", c.seed);
  {
    auto s = root.sub("data");
    auto& p = c.data.params;
    s.read("train_pairs", c.data.train_pairs);
    s.read("eval_pairs", c.data.eval_pairs);
    s.read("seed", c.data.seed);
    s.read("image_size", p.image_size);
    s.read("n_nuclei", p.n_nuclei);
    s.read("positivity_rate", p.positivity_rate);
    s.read("texture_scale", p.texture_scale);
    s.read("clusters", p.clusters);
    s.read("morphology_coupling", p.morphology_coupling);
    std::vector<double> t = {p.thresholds.t1, p.thresholds.t2, p.thresholds.t3};
    s.read("dab_thresholds", t);
    if (t.size() != 3) throw ConfigError("data.dab_thresholds", "needs exactly three values");
    p.thresholds = {t[0], t[1], t[2]};
    s.finish();
  }
  {
    auto s = root.sub("vq");
    auto& n = c.vq.net;
    s.read("base_channels", n.base_channels);
    s.read("latent_channels", n.latent_channels);
    s.read("downsample_blocks", n.downsample_blocks);
    s.read("max_channel_mult", n.max_channel_mult);
    s.read("res_blocks", n.res_blocks);
    s.read("groups", n.groups);
    s.read("dropout", n.dropout);
    s.read("disc_channels", n.disc_channels);
    s.read("codebook_size", c.vq.codebook_size);
    if (s.has("schedule")) c.vq.schedule = schedule_from_json(s.raw("schedule"), "vq.schedule");
    s.read("ema_decay", c.vq.ema_decay);
    s.read("epochs", c.vq_train.epochs);
    s.read("steps", c.vq_train.steps);
    s.read("batch_size", c.vq_train.batch_size);
    s.read("lr", c.vq_train.lr);
    s.read("beta1", c.vq_train.beta1);
    s.read("beta2", c.vq_train.beta2);
    s.read("restart_interval", c.vq_train.restart_interval);
    s.read("adv_start_step", c.vq_train.adv_start_step);
    s.finish();
  }
  {
    auto s = root.sub("translator");
    s.read("width", c.translator_width);
    s.read("epochs", c.translator_train.epochs);
    s.read("steps", c.translator_train.steps);
    s.read("batch_size", c.translator_train.batch_size);
    s.read("lr", c.translator_train.lr);
    s.finish();
  }
  {
    auto s = root.sub("var");
    s.read("dim", c.var.dim);
    s.read("layers", c.var.layers);
    s.read("heads", c.var.heads);
    s.read("mlp_ratio", c.var.mlp_ratio);
    s.read("dropout", c.var.dropout);
    s.read("epochs", c.var_train.epochs);
    s.read("steps", c.var_train.steps);
    s.read("batch_size", c.var_train.batch_size);
    s.read("lr", c.var_train.lr);
    s.read("decoder_lr", c.var_train.decoder_lr);
    s.read("adv_start_step", c.var_train.adv_start_step);
    s.finish();
  }
  {
    auto s = root.sub("weights");
    s.read("lambda_p", c.weights.lambda_p);
    s.read("lambda_adv", c.weights.lambda_adv);
    s.read("lambda_trans", c.weights.lambda_trans);
    s.read("lambda_1", c.weights.lambda_1);
    s.read("lambda_2", c.weights.lambda_2);
    s.finish();
  }
  {
    auto s = root.sub("sampling");
    std::string strategy = "greedy";
    s.read("strategy", strategy);
    if (strategy == "greedy") {
      c.sampling.kind = SamplingStrategy::Kind::kGreedy;
    } else if (strategy == "temperature") {
      c.sampling.kind = SamplingStrategy::Kind::kTemperature;
    } else if (strategy == "top_k") {
      c.sampling.kind = SamplingStrategy::Kind::kTopK;
    } else {
      throw ConfigError("sampling.strategy", "must be greedy, temperature or top_k");
    }
    s.read("temperature", c.sampling.temperature);
    s.read("top_k", c.sampling.top_k);
    s.finish();
  }
  {
    auto s = root.sub("ablation");
    s.read("seeds", c.ablation.seeds);
    s.read("misalignment_magnitude", c.ablation.misalignment_magnitude);
    s.read("arms", c.ablation.arms);
    if (s.has("schedules")) {
      c.ablation.schedules.clear();
      const auto& arr = s.raw("schedules");
      if (!arr.is_array()) throw ConfigError("ablation.schedules", "expected a list");
      for (const auto& e : arr) {
        if (!e.is_object() || !e.contains("name") || !e.contains("scales") ||
            !e["name"].is_string()) {
          throw ConfigError("ablation.schedules", "entries need a name and scales");
        }
        c.ablation.schedules.emplace_back(
            e["name"].get<std::string>(),
            schedule_from_json(e["scales"], "ablation.schedules." + e["name"].get<std::string>()));
      }
    }
    s.finish();
  }
  root.finish();
  c.finalize();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open config file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string(), std::string("is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

}  // namespace stainvar
