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

#include "stainvar/scoring.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "stainvar/error.hpp"

namespace stainvar {

void DabThresholds::validate() const {
  if (!(std::isfinite(t1) && std::isfinite(t2) && std::isfinite(t3)) || !(t1 < t2 && t2 < t3)) {
    throw InvalidArgument("DAB thresholds must satisfy t1 < t2 < t3");
  }
}

int intensity_class(double v, const DabThresholds& t) {
  if (v < t.t1) return 0;
  if (v < t.t2) return 1;
  if (v < t.t3) return 2;
  return 3;
}

NucleiCounts stratify_nuclei(std::span<const double> dab, const DabThresholds& thresholds) {
  thresholds.validate();
  NucleiCounts c;
  for (double v : dab) {
    switch (intensity_class(v, thresholds)) {
      case 0: ++c.n0; break;
      case 1: ++c.n1; break;
      case 2: ++c.n2; break;
      default: ++c.n3; break;
    }
  }
  c.n_total = static_cast<std::int64_t>(dab.size());
  return c;
}

namespace {

void require_denominator(const NucleiCounts& c) {
  if (c.n_total <= 0) throw InvalidArgument("n_total must be >= 1 to compute a score");
  if (c.n0 < 0 || c.n1 < 0 || c.n2 < 0 || c.n3 < 0) {
    throw InvalidArgument("nuclei counts must be nonnegative");
  }
}

}  // namespace

double h_score(const NucleiCounts& c) {
  require_denominator(c);
  const double total = static_cast<double>(c.n_total);
  return 1.0 * (c.n1 / total) * 100.0 + 2.0 * (c.n2 / total) * 100.0 +
         3.0 * (c.n3 / total) * 100.0;
}

bool bins_exceed_total(const NucleiCounts& c) noexcept { return c.binned() > c.n_total; }

int allred_proportion_score(double p_pos) {
  if (!(p_pos >= 0.0 && p_pos <= 1.0)) {
    throw InvalidArgument("positive fraction must lie in [0,1]");
  }
  if (p_pos == 0.0) return 0;
  const double pct = p_pos * 100.0;
  if (pct < 1.0) return 1;
  const double whole = std::round(pct);
  if (whole <= 10.0) return 2;
  if (whole <= 33.0) return 3;
  if (whole <= 66.0) return 4;
  return 5;
}

AllredScore allred_score(double p_pos, int intensity) {
  if (intensity < 0 || intensity > 3) throw InvalidArgument("intensity class must be 0..3");
  AllredScore s;
  s.proportion = allred_proportion_score(p_pos);
  s.intensity = intensity;
  s.total = s.proportion + s.intensity;
  return s;
}

double ki67_positive_pct(const NucleiCounts& c) {
  require_denominator(c);
  return static_cast<double>(c.positives()) / static_cast<double>(c.n_total);
}

const char* to_string(Her2Label label) noexcept {
  switch (label) {
    case Her2Label::kNegative: return "negative";
    case Her2Label::kPositive: return "positive";
    case Her2Label::kEquivocalExcluded: return "equivocal-excluded";
  }
  return "unknown";
}

Her2Label her2_binary_label(int score) {
  switch (score) {
    case 0:
    case 1: return Her2Label::kNegative;
    case 2: return Her2Label::kEquivocalExcluded;
    case 3: return Her2Label::kPositive;
    default: throw InvalidArgument("HER2 score must be 0..3, got " + std::to_string(score));
  }
}

std::vector<double> midranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sum_sq_dev(std::span<const double> v, double m) {
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s;
}

}  // namespace

double pearson_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw InvalidArgument("correlation needs two equal-length vectors of >= 2 items");
  }
  const double ma = mean_of(a), mb = mean_of(b);
  const double va = sum_sq_dev(a, ma), vb = sum_sq_dev(b, mb);
  if (va == 0.0 || vb == 0.0) throw UndefinedMetricError("correlation undefined: zero variance");
  double cov = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) cov += (a[i] - ma) * (b[i] - mb);
  return cov / std::sqrt(va * vb);
}

AgreementMetrics agreement_metrics(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size() || pred.size() < 2) {
    throw InvalidArgument("agreement metrics need equal-length vectors of >= 2 items");
  }
  AgreementMetrics m;
  const double mg = mean_of(gt);
  const double ss_tot = sum_sq_dev(gt, mg);
  if (ss_tot == 0.0) throw UndefinedMetricError("R^2 undefined: ground truth has zero variance");
  double ss_res = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) ss_res += (gt[i] - pred[i]) * (gt[i] - pred[i]);
  m.mse = ss_res / static_cast<double>(gt.size());
  m.r2 = 1.0 - ss_res / ss_tot;
  m.pearson = pearson_correlation(pred, gt);
  const auto rp = midranks(pred);
  const auto rg = midranks(gt);
  m.spearman = pearson_correlation(rp, rg);
  return m;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InvalidArgument("scores and labels differ in length");
  double n_pos = 0.0, n_neg = 0.0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw InvalidArgument("labels must be 0 or 1");
    (l == 1 ? n_pos : n_neg) += 1.0;
  }
  if (n_pos == 0.0 || n_neg == 0.0) throw UndefinedMetricError("AUC undefined: single class");
  const auto ranks = midranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (labels[i] == 1) rank_sum += ranks[i];
  }
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

double cohen_kappa(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size() || a.empty()) throw InvalidArgument("kappa needs equal, non-empty inputs");
  double table[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] != 0 && a[i] != 1) || (b[i] != 0 && b[i] != 1)) {
      throw InvalidArgument("kappa labels must be 0 or 1");
    }
    table[a[i]][b[i]] += 1.0;
  }
  const double n = static_cast<double>(a.size());
  const double po = (table[0][0] + table[1][1]) / n;
  const double a1 = (table[1][0] + table[1][1]) / n, b1 = (table[0][1] + table[1][1]) / n;
  const double pe = a1 * b1 + (1.0 - a1) * (1.0 - b1);
  if (pe == 1.0) return 1.0;  // both raters constant and identical
  return (po - pe) / (1.0 - pe);
}

ClassificationMetrics classification_metrics(std::span<const double> scores,
                                             std::span<const int> labels) {
  ClassificationMetrics m;
  m.auc = roc_auc(scores, labels);
  std::vector<int> hard(scores.size());
  double tp = 0, fp = 0, fn = 0, correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    hard[i] = scores[i] >= 0.5 ? 1 : 0;
    if (hard[i] == labels[i]) correct += 1;
    if (hard[i] == 1 && labels[i] == 1) tp += 1;
    if (hard[i] == 1 && labels[i] == 0) fp += 1;
    if (hard[i] == 0 && labels[i] == 1) fn += 1;
  }
  m.acc = correct / static_cast<double>(scores.size());
  m.f1 = 2.0 * tp / (2.0 * tp + fp + fn);
  m.kappa = cohen_kappa(hard, labels);
  return m;
}

ScoreRecord score_patch(const NucleiCounts& counts, const DabThresholds& thresholds,
                        std::optional<double> mean_positive_dab, std::optional<int> her2_score) {
  thresholds.validate();
  ScoreRecord r;
  r.h_score = h_score(counts);
  r.ki67_pct = ki67_positive_pct(counts);
  r.bins_exceed_total = bins_exceed_total(counts);
  int is = 0;
  if (mean_positive_dab) {
    is = intensity_class(*mean_positive_dab, thresholds);
  } else if (counts.positives() > 0) {
    const double mean_bin = static_cast<double>(counts.n1 + 2 * counts.n2 + 3 * counts.n3) /
                            static_cast<double>(counts.positives());
    is = static_cast<int>(std::lround(mean_bin));
  }
  r.allred = allred_score(std::min(1.0, r.ki67_pct), is);
  if (her2_score) r.her2_label = her2_binary_label(*her2_score);
  return r;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_number(const std::string& text, const std::string& column) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError(column, "cannot parse '" + text + "' as a number");
  }
  return value;
}

}  // namespace

std::vector<PatchRow> read_patch_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("header", "empty CSV input");
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* required : {"patch_id", "n0", "n1", "n2", "n3", "n_total"}) {
    if (!col.count(required)) throw ConfigError(required, "missing required CSV column");
  }
  std::vector<PatchRow> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    auto cell = [&](const std::string& name) -> std::optional<std::string> {
      auto it = col.find(name);
      if (it == col.end() || it->second >= cells.size() || cells[it->second].empty()) {
        return std::nullopt;
      }
      return cells[it->second];
    };
    auto required_int = [&](const char* name) {
      auto v = cell(name);
      if (!v) throw ConfigError(name, "missing value on row " + std::to_string(rows.size() + 1));
      auto n = parse_number<std::int64_t>(*v, name);
      if (n < 0) throw ConfigError(name, "counts must be nonnegative");
      return n;
    };
    PatchRow r;
    r.patch_id = cell("patch_id").value_or("");
    r.counts = {required_int("n0"), required_int("n1"), required_int("n2"), required_int("n3"),
                required_int("n_total")};
    if (auto v = cell("mean_positive_dab")) r.mean_positive_dab = parse_number<double>(*v, "mean_positive_dab");
    if (auto v = cell("her2_score")) r.her2_score = parse_number<int>(*v, "her2_score");
    if (auto v = cell("gt_h_score")) r.gt_h_score = parse_number<double>(*v, "gt_h_score");
    if (auto v = cell("gt_ki67_pct")) r.gt_ki67_pct = parse_number<double>(*v, "gt_ki67_pct");
    if (auto v = cell("gt_allred_total")) r.gt_allred_total = parse_number<int>(*v, "gt_allred_total");
    if (auto v = cell("gt_her2_score")) r.gt_her2_score = parse_number<int>(*v, "gt_her2_score");
    rows.push_back(std::move(r));
  }
  return rows;
}

ScoreReport score_rows(const std::vector<PatchRow>& rows, const DabThresholds& thresholds) {
  ScoreReport report;
  std::vector<double> hs_pred, hs_gt, ki_pred, ki_gt, allred_scores, her2_scores;
  std::vector<int> allred_labels, her2_labels;
  for (const auto& row : rows) {
    auto rec = score_patch(row.counts, thresholds, row.mean_positive_dab, row.her2_score);
    if (row.gt_h_score) {
      hs_pred.push_back(rec.h_score);
      hs_gt.push_back(*row.gt_h_score);
    }
    if (row.gt_ki67_pct) {
      ki_pred.push_back(rec.ki67_pct);
      ki_gt.push_back(*row.gt_ki67_pct);
    }
    if (row.gt_allred_total) {
      allred_scores.push_back(rec.allred.total / 8.0);
      allred_labels.push_back(*row.gt_allred_total >= 3 ? 1 : 0);
    }
    if (row.her2_score && row.gt_her2_score) {
      const auto gt = her2_binary_label(*row.gt_her2_score);
      if (*rec.her2_label != Her2Label::kEquivocalExcluded &&
          gt != Her2Label::kEquivocalExcluded) {
        her2_scores.push_back(*row.her2_score / 3.0);
        her2_labels.push_back(gt == Her2Label::kPositive ? 1 : 0);
      }
    }
    report.records.emplace_back(row.patch_id, rec);
  }
  auto guarded = [&](const char* name, auto&& fn) {
    try {
      fn();
    } catch (const UndefinedMetricError& e) {
      report.undefined.push_back(std::string(name) + ": " + e.what());
    } catch (const InvalidArgument& e) {
      report.undefined.push_back(std::string(name) + ": " + e.what());
    }
  };
  if (!hs_gt.empty()) guarded("h_score", [&] { report.h_score_agreement = agreement_metrics(hs_pred, hs_gt); });
  if (!ki_gt.empty()) guarded("ki67", [&] { report.ki67_agreement = agreement_metrics(ki_pred, ki_gt); });
  if (!allred_labels.empty()) {
    guarded("allred", [&] {
      report.allred_classification = classification_metrics(allred_scores, allred_labels);
    });
  }
  if (!her2_labels.empty()) {
    guarded("her2", [&] {
      report.her2_classification = classification_metrics(her2_scores, her2_labels);
    });
  }
  return report;
}

void write_score_records_csv(const ScoreReport& report, std::ostream& out) {
  out << "patch_id,h_score,allred_ps,allred_is,allred_total,ki67_pct,her2_label,bins_exceed_total\n";
  for (const auto& [id, r] : report.records) {
    out << id << ',' << r.h_score << ',' << r.allred.proportion << ',' << r.allred.intensity << ','
        << r.allred.total << ',' << r.ki67_pct << ','
        << (r.her2_label ? to_string(*r.her2_label) : "") << ','
        << (r.bins_exceed_total ? 1 : 0) << '\n';
  }
}

void write_score_summary_csv(const ScoreReport& report, std::ostream& out) {
  out << "target,metric,value\n";
  auto agreement = [&](const char* target, const std::optional<AgreementMetrics>& m) {
    if (!m) return;
    out << target << ",r2," << m->r2 << '\n' << target << ",spearman," << m->spearman << '\n'
        << target << ",pearson," << m->pearson << '\n' << target << ",mse," << m->mse << '\n';
  };
  auto classification = [&](const char* target, const std::optional<ClassificationMetrics>& m) {
    if (!m) return;
    out << target << ",acc," << m->acc << '\n' << target << ",auc," << m->auc << '\n' << target
        << ",f1," << m->f1 << '\n' << target << ",kappa," << m->kappa << '\n';
  };
  agreement("h_score", report.h_score_agreement);
  agreement("ki67_pct", report.ki67_agreement);
  classification("allred", report.allred_classification);
  classification("her2", report.her2_classification);
  for (const auto& note : report.undefined) out << "undefined,note,\"" << note << "\"\n";
}

}  // namespace stainvar
