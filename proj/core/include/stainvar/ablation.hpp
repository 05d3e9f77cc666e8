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

// Ablation harness. Each arm retrains only the stages it changes; stages an
// arm shares with the full method are trained once per seed and reused.

#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "stainvar/config.hpp"
#include "stainvar/pipeline.hpp"
#include "stainvar/synthetic.hpp"

namespace stainvar {

struct AblationRow {
  std::string arm;
  std::uint64_t seed = 0;
  // Training pairs.
  double psnr = 0.0;
  double ssim = 0.0;
  double proxy = 0.0;
  // Held-out pairs.
  double eval_psnr = 0.0;
  double eval_ssim = 0.0;
  double eval_proxy = 0.0;
};

struct AblationOrdering {
  std::string arm;
  double full_median = 0.0;
  double arm_median = 0.0;
  bool holds = false;
};

struct AblationReport {
  std::vector<AblationRow> rows;

  // Arms in first-appearance order.
  std::vector<std::string> arms() const;
  // Median over seeds of the training-pair PSNR. Throws InvalidArgument for
  // an arm without rows.
  double median_psnr(const std::string& arm) const;
  // full >= arm on median PSNR, for every listed arm present in the report.
  std::vector<AblationOrdering> orderings(const std::vector<std::string>& arms) const;

  void write_csv(std::ostream& out) const;
  // One line per arm with median PSNR / SSIM / proxy.
  std::string summary() const;
};

struct StageTiming {
  std::string label;
  double seconds = 0.0;
};

// Runs config.ablation.arms and config.ablation.schedules for every seed in
// config.ablation.seeds. Stage seeds derive from each ablation seed exactly
// as in a staged CLI run with that seed, so the "full" arm reproduces it.
AblationReport run_ablation(const PipelineConfig& config, const std::vector<SyntheticPair>& train,
                            const std::vector<SyntheticPair>& eval, const ProgressFn& log = {},
                            std::vector<StageTiming>* timings = nullptr);

// Median of a non-empty sample (mean of the middle pair for even sizes).
double median(std::vector<double> values);

}  // namespace stainvar
