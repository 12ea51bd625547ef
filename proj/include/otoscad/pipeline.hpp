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

// Pipeline stages over a run directory. Each stage reads its inputs from
// files written by earlier stages and fails with kMissingArtifact, naming
// the producing command, when one is absent.
//
//   <out>/config.json
//   <out>/dataset/{manifest.jsonl, provenance.json, frames/}
//   <out>/detector/{detector.json, train_log.csv, accuracy.csv}
//   <out>/scad/<method>/seed-<s>/{model.json, train_log.csv}
//   <out>/reports/<method>/seed-<s>/{val/, test/, metrics.json, roc.csv}
//   <out>/matrix/{runs.csv, table2.csv, table4.csv, table5.csv, null.csv}

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "otoscad/config.hpp"
#include "otoscad/metrics.hpp"

namespace otoscad::pipeline {

struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path dataset() const { return root / "dataset"; }
  std::filesystem::path manifest() const { return dataset() / "manifest.jsonl"; }
  std::filesystem::path detector_dir() const { return root / "detector"; }
  std::filesystem::path detector() const { return detector_dir() / "detector.json"; }
  std::filesystem::path scad_dir(const std::string& method, std::uint64_t seed) const;
  std::filesystem::path scad_model(const std::string& method, std::uint64_t seed) const {
    return scad_dir(method, seed) / "model.json";
  }
  std::filesystem::path report_dir(const std::string& method, std::uint64_t seed) const;
  std::filesystem::path metrics(const std::string& method, std::uint64_t seed) const {
    return report_dir(method, seed) / "metrics.json";
  }
  std::filesystem::path matrix_dir() const { return root / "matrix"; }
};

/// "config_hash=<hash> seed=<seed>", the provenance line of text artifacts.
std::string provenance(const config::RunConfig& config);

/// Generates the synthetic dataset of the config.
void cmd_synth(const config::RunConfig& config);

/// Trains the detector on the normal training videos.
void cmd_detect_train(const config::RunConfig& config);

/// Accuracy table over the annotated test frames.
std::vector<detect::AccuracyRow> cmd_detect_eval(const config::RunConfig& config);

/// Trains the embedding of one method ("msc", "cj-rc", "cj-rr", "cj-wf" or
/// an ablation name "ablation-<objective>") with the config seed.
void cmd_scad_train(const config::RunConfig& config, const std::string& method);

/// Scores validation and test videos, picks the threshold on validation at
/// the target sensitivity, and writes both reports.
void cmd_score(const config::RunConfig& config, const std::string& method);

struct MetricReport {
  std::string method;
  std::uint64_t seed = 0;
  std::string config_hash;
  double auroc = 0.0;
  double auprc = 0.0;
  double threshold = 0.0;
  metrics::ConfusionMetrics confusion;
  int videos = 0;
  int undetermined = 0;
  double validation_sensitivity = 0.0;

  nlohmann::json to_json() const;
};

/// Rank metrics and confusion metrics of the test report.
MetricReport cmd_eval(const config::RunConfig& config, const std::string& method);

struct MatrixResult {
  std::vector<detect::AccuracyRow> detection;
  std::vector<MetricReport> runs;        // comparison methods
  std::vector<MetricReport> ablation;    // objectives in table order
  std::vector<MetricReport> null_runs;   // comparison methods on the null set
};

/// Dataset, detector, every method and seed, the ablation and the null set;
/// writes the summary tables. `log` receives one line per finished stage.
MatrixResult cmd_matrix(const config::RunConfig& config,
                        const std::function<void(const std::string&)>& log = {});

/// Config of the magnitude-0 companion set under `<out>/null`.
config::RunConfig null_config(const config::RunConfig& config);

/// Mean and sample std of AUROC and AUPRC per method, in first-seen order.
struct TableRow {
  std::string method;
  metrics::MeanStd auroc;
  metrics::MeanStd auprc;
};
std::vector<TableRow> summarize(const std::vector<MetricReport>& runs);
void write_table(const std::vector<TableRow>& rows, const std::filesystem::path& path,
                 const std::string& provenance_line);

}  // namespace otoscad::pipeline
