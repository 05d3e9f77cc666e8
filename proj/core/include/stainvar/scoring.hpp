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

// Clinical scoring rules for IHC patches and the agreement/classification
// statistics used to compare predicted against ground-truth scores.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stainvar {

// DAB intensity cut points separating 0 / 1+ / 2+ / 3+.
struct DabThresholds {
  double t1 = 0.2;
  double t2 = 0.5;
  double t3 = 0.8;

  void validate() const;  // throws InvalidArgument unless t1 < t2 < t3
};

// n0..n3 come from the (generated) IHC image; n_total counts nuclei in the
// H&E image, so n0+n1+n2+n3 may differ from n_total.
struct NucleiCounts {
  std::int64_t n0 = 0;
  std::int64_t n1 = 0;
  std::int64_t n2 = 0;
  std::int64_t n3 = 0;
  std::int64_t n_total = 0;

  std::int64_t positives() const noexcept { return n1 + n2 + n3; }
  std::int64_t binned() const noexcept { return n0 + n1 + n2 + n3; }
  friend bool operator==(const NucleiCounts&, const NucleiCounts&) = default;
};

// Half-open bins: [0,t1) -> 0, [t1,t2) -> 1+, [t2,t3) -> 2+, [t3,inf) -> 3+.
// n_total is set to the number of intensities; callers override it with the
// H&E nucleus count when that denominator applies.
NucleiCounts stratify_nuclei(std::span<const double> dab_intensities,
                             const DabThresholds& thresholds = {});

// Class 0..3 of one intensity under the stratification bins.
int intensity_class(double dab_intensity, const DabThresholds& thresholds = {});

// sum_i i * N_i / N_total * 100. Throws InvalidArgument when n_total == 0.
double h_score(const NucleiCounts& counts);

// True when the IHC bins hold more nuclei than the H&E denominator; the
// H-Score is still evaluated literally and may leave [0,300].
bool bins_exceed_total(const NucleiCounts& counts) noexcept;

struct AllredScore {
  int proportion = 0;  // PS, 0..5
  int intensity = 0;   // IS, 0..3
  int total = 0;       // PS + IS, 0..8

  friend bool operator==(const AllredScore&, const AllredScore&) = default;
};

// Proportion score of a positive fraction. p == 0 maps to 0 and 0 < p < 1%
// to 1; otherwise p is rounded to the nearest whole percent and banded as
// 1-10 -> 2, 11-33 -> 3, 34-66 -> 4, >= 67 -> 5.
int allred_proportion_score(double p_pos);

// Throws InvalidArgument for p_pos outside [0,1] or a class outside 0..3.
AllredScore allred_score(double p_pos, int intensity_class);

// (n1+n2+n3)/n_total. Throws InvalidArgument when n_total == 0.
double ki67_positive_pct(const NucleiCounts& counts);

enum class Her2Label { kNegative, kPositive, kEquivocalExcluded };

const char* to_string(Her2Label label) noexcept;

// 0, 1 -> negative; 3 -> positive; 2 -> excluded. Throws InvalidArgument
// otherwise.
Her2Label her2_binary_label(int score);

struct AgreementMetrics {
  double r2 = 0.0;
  double spearman = 0.0;
  double pearson = 0.0;
  double mse = 0.0;
};

// Average (midrank) ranks, 1-based.
std::vector<double> midranks(std::span<const double> values);

double pearson_correlation(std::span<const double> a, std::span<const double> b);

// Throws InvalidArgument on unequal lengths or fewer than 2 items, and
// UndefinedMetricError when gt (R^2) or either side (correlations) is constant.
AgreementMetrics agreement_metrics(std::span<const double> pred, std::span<const double> gt);

struct ClassificationMetrics {
  double acc = 0.0;
  double auc = 0.0;
  double f1 = 0.0;
  double kappa = 0.0;
};

// Mann-Whitney AUC with midrank tie correction. Throws UndefinedMetricError
// unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// Cohen's kappa of two binary label vectors.
double cohen_kappa(std::span<const int> a, std::span<const int> b);

// Hard decisions at score >= 0.5.
ClassificationMetrics classification_metrics(std::span<const double> scores,
                                             std::span<const int> labels);

struct ScoreRecord {
  double h_score = 0.0;
  AllredScore allred;
  double ki67_pct = 0.0;
  std::optional<Her2Label> her2_label;
  bool bins_exceed_total = false;
};

// Score one patch. The Allred intensity class is taken from
// mean_positive_dab when known, otherwise from the rounded count-weighted
// mean bin of the positive nuclei.
ScoreRecord score_patch(const NucleiCounts& counts, const DabThresholds& thresholds = {},
                        std::optional<double> mean_positive_dab = std::nullopt,
                        std::optional<int> her2_score = std::nullopt);

// One CSV row: patch_id,n0,n1,n2,n3,n_total plus optional columns
// mean_positive_dab, her2_score, gt_h_score, gt_ki67_pct, gt_allred_total,
// gt_her2_score.
struct PatchRow {
  std::string patch_id;
  NucleiCounts counts;
  std::optional<double> mean_positive_dab;
  std::optional<int> her2_score;
  std::optional<double> gt_h_score;
  std::optional<double> gt_ki67_pct;
  std::optional<int> gt_allred_total;
  std::optional<int> gt_her2_score;
};

// Throws ConfigError naming the offending column on malformed input.
std::vector<PatchRow> read_patch_csv(std::istream& in);

struct ScoreReport {
  std::vector<std::pair<std::string, ScoreRecord>> records;
  std::optional<AgreementMetrics> h_score_agreement;
  std::optional<AgreementMetrics> ki67_agreement;
  // Allred total >= 3 as the positive class, score = total / 8.
  std::optional<ClassificationMetrics> allred_classification;
  // Equivocal (2+) rows on either side are dropped; score = her2 score / 3.
  std::optional<ClassificationMetrics> her2_classification;
  // Metrics that had ground truth but were undefined on it, with the reason.
  std::vector<std::string> undefined;
};

ScoreReport score_rows(const std::vector<PatchRow>& rows, const DabThresholds& thresholds = {});

void write_score_records_csv(const ScoreReport& report, std::ostream& out);
void write_score_summary_csv(const ScoreReport& report, std::ostream& out);

}  // namespace stainvar
