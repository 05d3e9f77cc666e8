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

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "stainvar/error.hpp"
#include "stainvar/scoring.hpp"

namespace stainvar {
namespace {

NucleiCounts counts(std::int64_t n0, std::int64_t n1, std::int64_t n2, std::int64_t n3,
                    std::int64_t total) {
  return {n0, n1, n2, n3, total};
}

TEST(Stratify, Bins) {
  const std::vector<double> zeros = {0, 0, 0};
  EXPECT_EQ(stratify_nuclei(zeros), counts(3, 0, 0, 0, 3));
  const std::vector<double> spread = {0.1, 0.3, 0.6, 0.9};
  EXPECT_EQ(stratify_nuclei(spread), counts(1, 1, 1, 1, 4));
}

TEST(Stratify, HalfOpenEdges) {
  const DabThresholds t;
  EXPECT_EQ(intensity_class(0.5, t), 2);
  EXPECT_EQ(intensity_class(0.2, t), 1);
  EXPECT_EQ(intensity_class(0.8, t), 3);
  EXPECT_EQ(intensity_class(std::nextafter(0.2, 0.0), t), 0);
}

TEST(Stratify, UnorderedThresholdsThrow) {
  const std::vector<double> v = {0.1};
  EXPECT_THROW(stratify_nuclei(v, {0.5, 0.2, 0.8}), InvalidArgument);
  EXPECT_THROW(stratify_nuclei(v, {0.2, 0.2, 0.8}), InvalidArgument);
}

TEST(HScore, Examples) {
  EXPECT_DOUBLE_EQ(h_score(counts(40, 10, 20, 30, 100)), 140.0);
  EXPECT_DOUBLE_EQ(h_score(counts(0, 0, 0, 17, 17)), 300.0);
  EXPECT_DOUBLE_EQ(h_score(counts(0, 0, 0, 0, 5)), 0.0);
  EXPECT_THROW(h_score(counts(0, 0, 0, 0, 0)), InvalidArgument);
}

TEST(HScore, ScaleInvariant) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> d(0, 40);
  for (int t = 0; t < 100; ++t) {
    auto c = counts(d(rng), d(rng), d(rng), d(rng), 0);
    c.n_total = c.binned() + d(rng) + 1;
    auto twice = counts(2 * c.n0, 2 * c.n1, 2 * c.n2, 2 * c.n3, 2 * c.n_total);
    EXPECT_NEAR(h_score(c), h_score(twice), 1e-12);
    EXPECT_GE(h_score(c), 0.0);
    EXPECT_LE(h_score(c), 300.0);
  }
}

TEST(HScore, ExceedingBinsAreFlagged) {
  const auto c = counts(0, 0, 0, 12, 10);
  EXPECT_TRUE(bins_exceed_total(c));
  EXPECT_DOUBLE_EQ(h_score(c), 360.0);
  EXPECT_TRUE(score_patch(c).bins_exceed_total);
}

TEST(Allred, Examples) {
  EXPECT_EQ(allred_score(0.0, 0), (AllredScore{0, 0, 0}));
  EXPECT_EQ(allred_score(0.5, 3), (AllredScore{4, 3, 7}));
  EXPECT_EQ(allred_score(0.005, 0).proportion, 1);
}

TEST(Allred, BandEdges) {
  EXPECT_EQ(allred_proportion_score(0.0099), 1);
  EXPECT_EQ(allred_proportion_score(0.01), 2);
  EXPECT_EQ(allred_proportion_score(0.10), 2);
  EXPECT_EQ(allred_proportion_score(0.104), 2);
  EXPECT_EQ(allred_proportion_score(0.106), 3);
  EXPECT_EQ(allred_proportion_score(0.33), 3);
  EXPECT_EQ(allred_proportion_score(0.34), 4);
  EXPECT_EQ(allred_proportion_score(0.66), 4);
  EXPECT_EQ(allred_proportion_score(0.67), 5);
  EXPECT_EQ(allred_proportion_score(1.0), 5);
}

TEST(Allred, MonotoneAndBounded) {
  int prev = 0;
  for (int i = 0; i <= 10000; ++i) {
    const double p = i / 10000.0;
    const int ps = allred_proportion_score(p);
    EXPECT_GE(ps, prev);
    prev = ps;
    for (int is = 0; is <= 3; ++is) {
      const auto s = allred_score(p, is);
      EXPECT_EQ(s.total, s.proportion + s.intensity);
      EXPECT_LE(s.total, 8);
    }
  }
}

TEST(Allred, RejectsOutOfRange) {
  EXPECT_THROW(allred_score(-0.01, 0), InvalidArgument);
  EXPECT_THROW(allred_score(1.01, 0), InvalidArgument);
  EXPECT_THROW(allred_score(0.5, 4), InvalidArgument);
}

TEST(Ki67, Examples) {
  EXPECT_DOUBLE_EQ(ki67_positive_pct(counts(40, 5, 3, 2, 50)), 0.2);
  EXPECT_DOUBLE_EQ(ki67_positive_pct(counts(9, 0, 0, 0, 9)), 0.0);
  EXPECT_DOUBLE_EQ(ki67_positive_pct(counts(0, 1, 2, 3, 6)), 1.0);
  EXPECT_THROW(ki67_positive_pct(counts(0, 0, 0, 0, 0)), InvalidArgument);
}

TEST(Her2, Labels) {
  EXPECT_EQ(her2_binary_label(0), Her2Label::kNegative);
  EXPECT_EQ(her2_binary_label(1), Her2Label::kNegative);
  EXPECT_EQ(her2_binary_label(2), Her2Label::kEquivocalExcluded);
  EXPECT_EQ(her2_binary_label(3), Her2Label::kPositive);
  EXPECT_THROW(her2_binary_label(4), InvalidArgument);
  EXPECT_THROW(her2_binary_label(-1), InvalidArgument);
}

TEST(Agreement, Identity) {
  const std::vector<double> v = {1, 5, 2, 8};
  const auto m = agreement_metrics(v, v);
  EXPECT_DOUBLE_EQ(m.r2, 1.0);
  EXPECT_DOUBLE_EQ(m.spearman, 1.0);
  EXPECT_NEAR(m.pearson, 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(m.mse, 0.0);
}

TEST(Agreement, SignFlip) {
  const std::vector<double> gt = {-1, 0, 3, -2};
  const std::vector<double> pred = {1, 0, -3, 2};
  EXPECT_NEAR(agreement_metrics(pred, gt).pearson, -1.0, 1e-15);
}

TEST(Agreement, HandComputed) {
  const std::vector<double> pred = {1, 2, 3};
  const std::vector<double> gt = {1, 2, 4};
  const auto m = agreement_metrics(pred, gt);
  EXPECT_NEAR(m.mse, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.pearson, 3.0 / std::sqrt(2.0 * 42.0 / 9.0), 1e-12);
  EXPECT_NEAR(m.pearson, 0.9820, 5e-5);
  EXPECT_DOUBLE_EQ(m.spearman, 1.0);
}

TEST(Agreement, Errors) {
  const std::vector<double> flat = {2, 2, 2};
  const std::vector<double> v = {1, 2, 3};
  EXPECT_THROW(agreement_metrics(v, flat), UndefinedMetricError);
  EXPECT_THROW(agreement_metrics(flat, v), UndefinedMetricError);
  EXPECT_THROW(agreement_metrics(std::vector<double>{1}, std::vector<double>{1}), InvalidArgument);
  EXPECT_THROW(agreement_metrics(v, std::vector<double>{1, 2}), InvalidArgument);
}

TEST(Midranks, Ties) {
  const std::vector<double> v = {3, 1, 3, 2};
  EXPECT_EQ(midranks(v), (std::vector<double>{3.5, 1, 3.5, 2}));
}

TEST(Auc, Examples) {
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}),
                   0.75);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.3, 0.3, 0.3}, std::vector<int>{0, 1, 1}), 0.5);
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}),
               UndefinedMetricError);
}

TEST(Auc, MatchesPairwiseCount) {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 200; ++t) {
    const int n = std::uniform_int_distribution<int>(2, 50)(rng);
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (int i = 0; i < n; ++i) {
      s[i] = std::uniform_int_distribution<int>(0, 9)(rng) / 10.0;
      l[i] = i < 1 ? 0 : (i < 2 ? 1 : static_cast<int>(rng() & 1));
    }
    EXPECT_NEAR(roc_auc(s, l), oracle::auc(s, l), 1e-12);
  }
}

TEST(Classification, PerfectSeparation) {
  const std::vector<double> s = {0.1, 0.2, 0.7, 0.9};
  const std::vector<int> l = {0, 0, 1, 1};
  const auto m = classification_metrics(s, l);
  EXPECT_DOUBLE_EQ(m.auc, 1.0);
  EXPECT_DOUBLE_EQ(m.acc, 1.0);
  EXPECT_DOUBLE_EQ(m.f1, 1.0);
  EXPECT_DOUBLE_EQ(m.kappa, 1.0);
}

TEST(Kappa, MatchesTable) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    std::vector<int> a(30), b(30);
    for (int i = 0; i < 30; ++i) {
      a[i] = static_cast<int>(rng() & 1);
      b[i] = static_cast<int>(rng() & 1);
    }
    a[0] = 0, a[1] = 1, b[0] = 1, b[1] = 0;
    EXPECT_NEAR(cohen_kappa(a, b), oracle::kappa(a, b), 1e-12);
    EXPECT_DOUBLE_EQ(cohen_kappa(a, a), 1.0);
  }
}

TEST(Kappa, IndependentRatersAverageNearZero) {
  std::mt19937_64 rng(9);
  double sum = 0.0;
  const int trials = 400;
  for (int t = 0; t < trials; ++t) {
    std::vector<int> a(200), b(200);
    for (int i = 0; i < 200; ++i) {
      a[i] = static_cast<int>(rng() & 1);
      b[i] = static_cast<int>(rng() & 1);
    }
    sum += cohen_kappa(a, b);
  }
  EXPECT_NEAR(sum / trials, 0.0, 0.01);
}

TEST(ScorePatch, IntensityFromMeanDab) {
  const auto r = score_patch(counts(50, 10, 20, 20, 100), {}, 0.65, 3);
  EXPECT_DOUBLE_EQ(r.h_score, 10.0 + 40.0 + 60.0);
  EXPECT_DOUBLE_EQ(r.ki67_pct, 0.5);
  EXPECT_EQ(r.allred, (AllredScore{4, 2, 6}));
  EXPECT_EQ(r.her2_label, Her2Label::kPositive);
}

TEST(ScorePatch, IntensityFromBins) {
  const auto r = score_patch(counts(0, 1, 1, 2, 4));
  EXPECT_EQ(r.allred.intensity, 2);
  EXPECT_FALSE(r.her2_label.has_value());
}

TEST(PatchCsv, ParsesAndScores) {
  std::istringstream in(
      "patch_id,n0,n1,n2,n3,n_total,gt_h_score,gt_ki67_pct,gt_allred_total,gt_her2_score\n"
      "a,10,0,0,0,10,0,0,0,0\n"
      "b,0,10,0,0,10,100,1,6,1\n"
      "c,0,0,0,10,10,300,1,8,3\n");
  const auto rows = read_patch_csv(in);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1].counts, counts(0, 10, 0, 0, 10));
  const auto report = score_rows(rows);
  ASSERT_TRUE(report.h_score_agreement.has_value());
  EXPECT_DOUBLE_EQ(report.h_score_agreement->r2, 1.0);
  std::ostringstream out;
  write_score_records_csv(report, out);
  EXPECT_NE(out.str().find("c,300"), std::string::npos);
}

TEST(PatchCsv, BadColumnNamesKey) {
  std::istringstream in("patch_id,n0,n1,n2,n3,n_total\nx,1,two,0,0,3\n");
  try {
    read_patch_csv(in);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "n1");
  }
}

}  // namespace
}  // namespace stainvar
