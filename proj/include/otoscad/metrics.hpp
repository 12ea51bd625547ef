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

#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "otoscad/types.hpp"

namespace otoscad::metrics {

/// Probability that a random abnormal score outranks a random normal one,
/// ties credited 1/2. Throws unless both labels are present.
double auroc(std::span<const LabeledScore> scores);

/// Average precision with abnormal as positive: sum over distinct
/// thresholds (descending) of (R_k - R_{k-1}) * P_k, where a score counts
/// as flagged when >= threshold. Throws without positives.
double auprc(std::span<const LabeledScore> scores);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

/// Step curve of the threshold sweep over observed scores, from (0, 0) to
/// (1, 1); one point per distinct score plus the origin.
std::vector<RocPoint> export_roc(std::span<const LabeledScore> scores);
double trapezoid_area(std::span<const RocPoint> curve);

struct ConfusionCounts {
  int tp = 0, fp = 0, tn = 0, fn = 0;
  int total() const { return tp + fp + tn + fn; }
};

/// Ratios with zero denominators are absent rather than zero.
struct ConfusionMetrics {
  ConfusionCounts counts;
  double accuracy = 0.0;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> precision;
};

/// decisions[i] == true means "flagged abnormal".
ConfusionMetrics confusion_metrics(const std::vector<bool>& decisions,
                                   const std::vector<Label>& labels);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single run
  int runs = 0;
};

MeanStd mean_std(std::span<const double> values);

/// "88.0 ± 1.0"
std::string format_mean_std(const MeanStd& value, int decimals = 1);

struct MethodSummary {
  std::string method;
  MeanStd value;
};

/// Per-method mean and sample std, in input order.
std::vector<MethodSummary> summarize_runs(
    const std::vector<std::pair<std::string, std::vector<double>>>& runs);

}  // namespace otoscad::metrics
