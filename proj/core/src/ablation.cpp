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

#include "stainvar/ablation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>

#include "stainvar/error.hpp"

namespace stainvar {

namespace {

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

struct VqPair {
  VqBundle he;
  VqBundle ihc;
};

class Harness {
 public:
  Harness(const PipelineConfig& config, const std::vector<SyntheticPair>& train,
          const std::vector<SyntheticPair>& eval, const ProgressFn& log,
          std::vector<StageTiming>* timings)
      : config_(config), log_(log), timings_(timings) {
    train_he_ = stack_images(train, false);
    train_ihc_ = stack_images(train, true);
    if (!eval.empty()) {
      eval_he_ = stack_images(eval, false);
      eval_ihc_ = stack_images(eval, true);
    }
    train_pairs_ = &train;
  }

  void run_seed(std::uint64_t seed, AblationReport& report) {
    seed_ = seed;
    vq_cache_.clear();
    full_translator_ = TranslatorNet(nullptr);
    for (const auto& arm : config_.ablation.arms) report.rows.push_back(run_arm(arm));
    for (const auto& [name, schedule] : config_.ablation.schedules) {
      auto c = config_;
      c.vq.schedule = schedule;
      c.finalize();
      auto& vq = vq_for(c);
      auto tr = train_translator(c, vq, train_he_, train_ihc_, {}, "schedule " + name);
      auto st = train_var(c, vq, *tr, train_he_, train_ihc_, {}, "schedule " + name);
      report.rows.push_back(evaluate("schedule " + name, c, vq, tr, &st));
    }
  }

 private:
  template <typename F>
  auto timed(const std::string& label, F&& f) {
    say(label);
    const auto t0 = std::chrono::steady_clock::now();
    auto out = f();
    const double s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (timings_) timings_->push_back({label + " seed " + std::to_string(seed_), s});
    return out;
  }

  void say(const std::string& msg) {
    if (log_) log_("[seed " + std::to_string(seed_) + "] " + msg);
  }

  VqPair& vq_for(const PipelineConfig& c) {
    const auto key = c.vq.schedule.to_string();
    auto it = vq_cache_.find(key);
    if (it != vq_cache_.end()) return it->second;
    VqPair p;
    p.he = timed("vq he " + key, [&] {
      return train_vq_stage(c, train_he_, stage_seed(seed_, 1), nullptr, log_);
    });
    p.ihc = timed("vq ihc " + key, [&] {
      return train_vq_stage(c, train_ihc_, stage_seed(seed_, 2), nullptr, log_);
    });
    return vq_cache_.emplace(key, std::move(p)).first->second;
  }

  TranslatorNet train_translator(const PipelineConfig& c, VqPair& vq, const torch::Tensor& he,
                                 const torch::Tensor& ihc, const StageOptions& opts,
                                 const std::string& label) {
    return timed("translator " + label, [&] {
      return train_translator_stage(c, vq.he, vq.ihc, he, ihc, opts, stage_seed(seed_, 3),
                                    nullptr, log_);
    });
  }

  VarStage train_var(const PipelineConfig& c, VqPair& vq, TranslatorNetImpl& tr,
                     const torch::Tensor& he, const torch::Tensor& ihc, const StageOptions& opts,
                     const std::string& label) {
    return timed("var " + label, [&] {
      return train_var_stage(c, vq.he, vq.ihc, tr, he, ihc, opts, stage_seed(seed_, 4), log_);
    });
  }

  TranslatorNet& full_translator() {
    if (!full_translator_) {
      full_translator_ = train_translator(config_, vq_for(config_), train_he_, train_ihc_, {}, "full");
    }
    return full_translator_;
  }

  AblationRow run_arm(const std::string& arm) {
    const auto& c = config_;
    StageOptions opts;
    if (arm == "w/o VAR") {
      auto& tr = full_translator();
      return evaluate(arm, c, vq_for(c), tr, nullptr);
    }
    if (arm == "w/o L_LSA" || arm == "w/o L_ISA") {
      opts.use_lsa = arm != "w/o L_LSA";
      opts.use_isa = arm != "w/o L_ISA";
      auto& vq = vq_for(c);
      auto tr = train_translator(c, vq, train_he_, train_ihc_, opts, arm);
      auto st = train_var(c, vq, *tr, train_he_, train_ihc_, opts, arm);
      return evaluate(arm, c, vq, tr, &st);
    }
    if (arm == "w/o multi-scale") {
      auto cm = config_;
      cm.vq.schedule = ScaleSchedule({config_.latent_grid()});
      cm.finalize();
      auto& vq = vq_for(cm);
      auto tr = train_translator(cm, vq, train_he_, train_ihc_, opts, arm);
      auto st = train_var(cm, vq, *tr, train_he_, train_ihc_, opts, arm);
      return evaluate(arm, cm, vq, tr, &st);
    }
    if (arm == "w/o registration") {
      std::vector<SyntheticPair> warped;
      for (std::size_t i = 0; i < train_pairs_->size(); ++i) {
        warped.push_back(inject_misalignment((*train_pairs_)[i],
                                             c.ablation.misalignment_magnitude,
                                             pair_seed(seed_, 3, static_cast<int>(i)))
                             .pair);
      }
      const auto ihc = stack_images(warped, true);
      auto& vq = vq_for(c);
      auto tr = train_translator(c, vq, train_he_, ihc, opts, arm);
      auto st = train_var(c, vq, *tr, train_he_, ihc, opts, arm);
      return evaluate(arm, c, vq, tr, &st);
    }
    if (arm == "w/o D^FT") opts.finetune_decoder = false;
    else if (arm == "w/o L_adv") opts.use_adv = false;
    else if (arm == "w/o L_pixel") opts.use_pixel = false;
    else if (arm == "w/o f_global") opts.use_global_context = false;
    else if (arm == "w/o 3S-Map") opts.use_start_map = false;
    else if (arm != "full") throw InvalidArgument("unknown ablation arm '" + arm + "'");
    auto& vq = vq_for(c);
    auto& tr = full_translator();
    auto st = train_var(c, vq, *tr, train_he_, train_ihc_, opts, arm);
    return evaluate(arm, c, vq, tr, &st);
  }

  AblationRow evaluate(const std::string& arm, const PipelineConfig& c, VqPair& vq,
                       TranslatorNet& tr, VarStage* st) {
    PipelineModels m;
    m.config = c;
    m.he = vq.he;
    m.ihc = vq.ihc;
    m.translator = tr;
    if (st) {
      m.var = st->var;
      m.decoder_ft = st->decoder_ft;
    }
    auto run = [&](const torch::Tensor& x) {
      return st ? infer_batch(m, x, c.sampling, seed_) : translate_decode_batch(m, x);
    };
    AblationRow row;
    row.arm = arm;
    row.seed = seed_;
    const auto q = image_quality(run(train_he_), train_ihc_);
    row.psnr = q.mean_psnr;
    row.ssim = q.mean_ssim;
    row.proxy = q.mean_proxy;
    if (eval_he_.defined()) {
      const auto e = image_quality(run(eval_he_), eval_ihc_);
      row.eval_psnr = e.mean_psnr;
      row.eval_ssim = e.mean_ssim;
      row.eval_proxy = e.mean_proxy;
    }
    say(arm + ": psnr " + fmt(row.psnr) + " ssim " + fmt(row.ssim));
    return row;
  }

  const PipelineConfig& config_;
  ProgressFn log_;
  std::vector<StageTiming>* timings_;
  const std::vector<SyntheticPair>* train_pairs_ = nullptr;
  torch::Tensor train_he_, train_ihc_, eval_he_, eval_ihc_;
  std::uint64_t seed_ = 0;
  std::map<std::string, VqPair> vq_cache_;
  TranslatorNet full_translator_{nullptr};
};

}  // namespace

double median(std::vector<double> v) {
  if (v.empty()) throw InvalidArgument("median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  const double a = v[n / 2 - 1], b = v[n / 2];
  if (std::isinf(a) && std::isinf(b) && a == b) return a;
  return 0.5 * (a + b);
}

std::vector<std::string> AblationReport::arms() const {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    if (std::find(out.begin(), out.end(), r.arm) == out.end()) out.push_back(r.arm);
  }
  return out;
}

double AblationReport::median_psnr(const std::string& arm) const {
  std::vector<double> v;
  for (const auto& r : rows) {
    if (r.arm == arm) v.push_back(r.psnr);
  }
  if (v.empty()) throw InvalidArgument("no ablation rows for arm '" + arm + "'");
  return median(std::move(v));
}

std::vector<AblationOrdering> AblationReport::orderings(const std::vector<std::string>& list) const {
  const auto present = arms();
  const double full = median_psnr("full");
  std::vector<AblationOrdering> out;
  for (const auto& arm : list) {
    if (std::find(present.begin(), present.end(), arm) == present.end()) continue;
    AblationOrdering o;
    o.arm = arm;
    o.full_median = full;
    o.arm_median = median_psnr(arm);
    o.holds = full >= o.arm_median;
    out.push_back(o);
  }
  return out;
}

void AblationReport::write_csv(std::ostream& out) const {
  out << "arm,seed,psnr,ssim,proxy,eval_psnr,eval_ssim,eval_proxy\n";
  for (const auto& r : rows) {
    out << r.arm << ',' << r.seed << ',' << fmt(r.psnr) << ',' << fmt(r.ssim) << ','
        << fmt(r.proxy) << ',' << fmt(r.eval_psnr) << ',' << fmt(r.eval_ssim) << ','
        << fmt(r.eval_proxy) << '\n';
  }
}

std::string AblationReport::summary() const {
  std::ostringstream out;
  for (const auto& arm : arms()) {
    std::vector<double> s, p;
    for (const auto& r : rows) {
      if (r.arm != arm) continue;
      s.push_back(r.ssim);
      p.push_back(r.proxy);
    }
    char line[160];
    std::snprintf(line, sizeof line, "%-22s median psnr %s  ssim %s  proxy %s\n", arm.c_str(),
                  fmt(median_psnr(arm)).c_str(), fmt(median(s)).c_str(), fmt(median(p)).c_str());
    out << line;
  }
  return out.str();
}

AblationReport run_ablation(const PipelineConfig& config, const std::vector<SyntheticPair>& train,
                            const std::vector<SyntheticPair>& eval, const ProgressFn& log,
                            std::vector<StageTiming>* timings) {
  if (train.empty()) throw MissingPrerequisiteError("ablation needs training pairs");
  Harness h(config, train, eval, log, timings);
  AblationReport report;
  for (auto seed : config.ablation.seeds) h.run_seed(seed, report);
  return report;
}

}  // namespace stainvar
