// Copyright 2026 The otoscad Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "otoscad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "otoscad/error.hpp"

namespace otoscad::metrics {

namespace {

std::pair<int, int> label_counts(std::span<const LabeledScore> scores) {
  int pos = 0, neg = 0;
  for (const auto& s : scores) {
    require(!std::isnan(s.score), ErrorCategory::kInvalidArgument, "score is NaN");
    (s.label == Label::kAbnormal ? pos : neg)++;
  }
  return {pos, neg};
}

std::vector<LabeledScore> sorted_descending(std::span<const LabeledScore> scores) {
  std::vector<LabeledScore> v(scores.begin(), scores.end());
  std::stable_sort(v.begin(), v.end(),
                   [](const LabeledScore& a, const LabeledScore& b) { return a.score > b.score; });
  return v;
}

}  // namespace

double auroc(std::span<const LabeledScore> scores) {
  const auto [pos, neg] = label_counts(scores);
  require(pos > 0 && neg > 0, ErrorCategory::kInvalidArgument,
          "AUROC needs both normal and abnormal samples");
  std::vector<LabeledScore> v(scores.begin(), scores.end());
  std::stable_sort(v.begin(), v.end(),
                   [](const LabeledScore& a, const LabeledScore& b) { return a.score < b.score; });
  // Sum of mid-ranks of the positives (Mann-Whitney U).
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < v.size()) {
    std::size_t j = i;
    while (j < v.size() && v[j].score == v[i].score) ++j;
    const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (v[k].label == Label::kAbnormal) rank_sum += mid_rank;
    }
    i = j;
  }
  const double u = rank_sum - static_cast<double>(pos) * (pos + 1) / 2.0;
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double auprc(std::span<const LabeledScore> scores) {
  const auto [pos, neg] = label_counts(scores);
  (void)neg;
  require(pos > 0, ErrorCategory::kInvalidArgument, "AUPRC needs at least one abnormal sample");
  const auto v = sorted_descending(scores);
  double area = 0.0;
  double prev_recall = 0.0;
  int tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < v.size()) {
    std::size_t j = i;
    while (j < v.size() && v[j].score == v[i].score) {
      (v[j].label == Label::kAbnormal ? tp : fp)++;
      ++j;
    }
    const double recall = static_cast<double>(tp) / pos;
    const double precision = static_cast<double>(tp) / (tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

std::vector<RocPoint> export_roc(std::span<const LabeledScore> scores) {
  const auto [pos, neg] = label_counts(scores);
  require(pos > 0 && neg > 0, ErrorCategory::kInvalidArgument,
          "ROC curve needs both normal and abnormal samples");
  const auto v = sorted_descending(scores);
  std::vector<RocPoint> curve{{0.0, 0.0}};
  int tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < v.size()) {
    std::size_t j = i;
    while (j < v.size() && v[j].score == v[i].score) {
      (v[j].label == Label::kAbnormal ? tp : fp)++;
      ++j;
    }
    curve.push_back({static_cast<double>(fp) / neg, static_cast<double>(tp) / pos});
    i = j;
  }
  return curve;
}

double trapezoid_area(std::span<const RocPoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
  }
  return area;
}

ConfusionMetrics confusion_metrics(const std::vector<bool>& decisions,
                                   const std::vector<Label>& labels) {
  require(decisions.size() == labels.size(), ErrorCategory::kInvalidArgument,
          "decisions and labels differ in length");
  require(!decisions.empty(), ErrorCategory::kInvalidArgument, "confusion metrics of empty input");
  ConfusionMetrics m;
  auto& c = m.counts;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const bool positive = labels[i] == Label::kAbnormal;
    if (decisions[i]) {
      (positive ? c.tp : c.fp)++;
    } else {
      (positive ? c.fn : c.tn)++;
    }
  }
  m.accuracy = static_cast<double>(c.tp + c.tn) / c.total();
  if (c.tp + c.fn > 0) m.sensitivity = static_cast<double>(c.tp) / (c.tp + c.fn);
  if (c.tn + c.fp > 0) m.specificity = static_cast<double>(c.tn) / (c.tn + c.fp);
  if (c.tp + c.fp > 0) m.precision = static_cast<double>(c.tp) / (c.tp + c.fp);
  return m;
}

MeanStd mean_std(std::span<const double> values) {
  require(!values.empty(), ErrorCategory::kInvalidArgument, "mean of no runs");
  MeanStd out;
  out.runs = static_cast<int>(values.size());
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

std::string format_mean_std(const MeanStd& value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f ± %.*f", decimals, value.mean, decimals, value.std);
  return buf;
}

std::vector<MethodSummary> summarize_runs(
    const std::vector<std::pair<std::string, std::vector<double>>>& runs) {
  std::vector<MethodSummary> out;
  for (const auto& [method, values] : runs) out.push_back({method, mean_std(values)});
  return out;
}

}  // namespace otoscad::metrics
