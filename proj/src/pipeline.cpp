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

#include "otoscad/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <utility>

#include <spdlog/spdlog.h>

#include "otoscad/dataset.hpp"
#include "otoscad/error.hpp"
#include "otoscad/io.hpp"
#include "otoscad/scoring.hpp"
#include "otoscad/synth.hpp"

namespace otoscad::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

fs::path RunPaths::scad_dir(const std::string& method, std::uint64_t seed) const {
  return root / "scad" / method / ("seed-" + std::to_string(seed));
}

fs::path RunPaths::report_dir(const std::string& method, std::uint64_t seed) const {
  return root / "reports" / method / ("seed-" + std::to_string(seed));
}

std::string provenance(const config::RunConfig& config) {
  return "config_hash=" + config::config_hash(config) + " seed=" + std::to_string(config.seed);
}

namespace {

void require_artifact(const fs::path& path, const std::string& producer) {
  require(fs::exists(path), ErrorCategory::kMissingArtifact,
          "missing " + path.string() + "; run `otoscad " + producer + "` first");
}

json provenance_json(const config::RunConfig& config) {
  return {{"config_hash", config::config_hash(config)}, {"seed", config.seed}};
}

struct Dataset {
  data::DatasetManifest manifest;
  data::FrameSourceFactory sources;
};

Dataset open_dataset(const RunPaths& paths) {
  require_artifact(paths.manifest(), "synth");
  Dataset d;
  d.manifest = data::load_manifest(paths.manifest());
  d.sources = data::directory_sources(data::frame_root(d.manifest, paths.manifest()));
  return d;
}

detect::DetectorModel open_detector(const RunPaths& paths) {
  require_artifact(paths.detector(), "detect-train");
  return detect::load_detector(paths.detector());
}

config::MethodSpec resolve_method(const config::RunConfig& config, const std::string& method) {
  const std::string prefix = "ablation-";
  if (method.starts_with(prefix)) return config::ablation_spec(method.substr(prefix.size()), config);
  return config::method_spec(method);
}

std::vector<data::VideoPatches> train_patches(const config::RunConfig& config, const Dataset& d) {
  return data::extract_groundtruth_patches(d.manifest.in_split(Split::kTrain), d.sources,
                                           config.scad.patch_size);
}

struct Detected {
  std::vector<score::DetectedVideo> val, test;
};

Detected detect_eval_splits(const config::RunConfig& config, const Dataset& d,
                            const detect::DetectorModel& detector) {
  return {score::detect_patches(detector, d.manifest.in_split(Split::kVal), d.sources,
                                config.scad.patch_size),
          score::detect_patches(detector, d.manifest.in_split(Split::kTest), d.sources,
                                config.scad.patch_size)};
}

void train_method(const config::RunConfig& config, const RunPaths& paths,
                  const std::string& method, const std::vector<data::VideoPatches>& patches) {
  const config::MethodSpec spec = resolve_method(config, method);
  scad::EmbeddingModel model(config.scad.model);
  model.init(config.seed);
  if (config.scad.init == config::EmbeddingInit::kDetector) {
    nn::copy_backbone_params(open_detector(paths).params(), model.params());
  }
  const auto params = config::train_params(config, spec);
  const auto variant = config::shift_variant(config, spec);
  const auto result = scad::train_scad(patches, model, params, variant, config.seed);

  json meta = provenance_json(config);
  meta["method"] = method;
  meta["objective"] = std::string(scad::to_string(spec.objective));
  meta["shift"] = spec.shift ? std::string(shift::to_string(*spec.shift)) : "none";
  meta["epochs"] = params.epochs;
  meta["final_loss"] = result.log.empty() ? 0.0 : result.log.back().total;
  const fs::path dir = paths.scad_dir(method, config.seed);
  scad::save_embedding(model, result.center, meta, dir / "model.json");
  scad::write_train_log(result.log, dir / "train_log.csv", provenance(config));
}

struct ScoredRun {
  score::AnomalyReport val, test;
};

ScoredRun score_method(const config::RunConfig& config, const scad::EmbeddingModel& model,
                       const std::vector<data::VideoPatches>& patches, const Detected& detected) {
  const auto index = score::build_index(model, patches, config.scoring.k);
  ScoredRun run{score::score_detected(model, index, detected.val),
                score::score_detected(model, index, detected.test)};
  const auto policy = config.scoring.undetermined;
  const double psi = score::select_threshold(score::labeled_video_scores(run.val, policy),
                                             config.scoring.target_sensitivity);
  for (auto* r : {&run.val, &run.test}) {
    score::apply_threshold(*r, psi, policy);
    r->config_hash = config::config_hash(config);
    r->seed = config.seed;
  }
  return run;
}

double flagged_sensitivity(const score::AnomalyReport& report) {
  int positives = 0, flagged = 0;
  for (const auto& v : report.videos) {
    if (v.label != Label::kAbnormal || !v.flagged) continue;
    ++positives;
    if (*v.flagged) ++flagged;
  }
  return positives == 0 ? 0.0 : static_cast<double>(flagged) / positives;
}

MetricReport evaluate(const config::RunConfig& config, const std::string& method,
                      const ScoredRun& run) {
  MetricReport m;
  m.method = method;
  m.seed = config.seed;
  m.config_hash = config::config_hash(config);
  const auto scores = score::labeled_video_scores(run.test, config.scoring.undetermined);
  m.auroc = metrics::auroc(scores);
  m.auprc = metrics::auprc(scores);
  m.threshold = run.test.threshold;
  std::vector<bool> decisions;
  std::vector<Label> labels;
  for (const auto& v : run.test.videos) {
    if (!v.flagged) continue;
    decisions.push_back(*v.flagged);
    labels.push_back(v.label);
  }
  m.confusion = metrics::confusion_metrics(decisions, labels);
  m.videos = static_cast<int>(run.test.videos.size());
  m.undetermined = static_cast<int>(run.test.undetermined().size());
  m.validation_sensitivity = flagged_sensitivity(run.val);
  return m;
}

void write_roc(const score::AnomalyReport& report, score::UndeterminedPolicy policy,
               const fs::path& path, const std::string& provenance_line) {
  std::string text = "# " + provenance_line + "\nfpr,tpr\n";
  char buf[64];
  for (const auto& p : metrics::export_roc(score::labeled_video_scores(report, policy))) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.fpr, p.tpr);
    text += buf;
  }
  io::write_text(path, text);
}

void save_run(const config::RunConfig& config, const RunPaths& paths, const std::string& method,
              const ScoredRun& run, const MetricReport& m) {
  const fs::path dir = paths.report_dir(method, config.seed);
  score::save_report(run.val, dir / "val");
  score::save_report(run.test, dir / "test");
  io::write_json(dir / "metrics.json", m.to_json());
  write_roc(run.test, config.scoring.undetermined, dir / "roc.csv", provenance(config));
}

std::string optional_text(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

void write_runs_csv(const std::vector<MetricReport>& runs, const fs::path& path,
                    const std::string& provenance_line) {
  std::string text = "# " + provenance_line +
                     "\nmethod,seed,auroc,auprc,threshold,accuracy,sensitivity,specificity,"
                     "precision,undetermined\n";
  char buf[256];
  for (const auto& r : runs) {
    std::snprintf(buf, sizeof buf, "%s,%llu,%.6f,%.6f,%.9g,%.6f,", r.method.c_str(),
                  static_cast<unsigned long long>(r.seed), r.auroc, r.auprc, r.threshold,
                  r.confusion.accuracy);
    text += buf;
    text += optional_text(r.confusion.sensitivity) + "," + optional_text(r.confusion.specificity) +
            "," + optional_text(r.confusion.precision) + "," + std::to_string(r.undetermined) + "\n";
  }
  io::write_text(path, text);
}

void write_confusion_table(const std::vector<MetricReport>& runs, const fs::path& path,
                           const std::string& provenance_line) {
  std::vector<std::string> order;
  std::map<std::string, std::array<std::vector<double>, 4>> values;
  for (const auto& r : runs) {
    if (!values.contains(r.method)) order.push_back(r.method);
    auto& v = values[r.method];
    v[0].push_back(r.confusion.accuracy);
    if (r.confusion.sensitivity) v[1].push_back(*r.confusion.sensitivity);
    if (r.confusion.specificity) v[2].push_back(*r.confusion.specificity);
    if (r.confusion.precision) v[3].push_back(*r.confusion.precision);
  }
  std::string text = "# " + provenance_line + "\nmethod,accuracy,sensitivity,specificity,precision\n";
  for (const auto& method : order) {
    text += method;
    for (const auto& column : values[method]) {
      text += ",";
      if (!column.empty()) {
        auto ms = metrics::mean_std(column);
        ms.mean *= 100.0;
        ms.std *= 100.0;
        text += metrics::format_mean_std(ms);
      }
    }
    text += "\n";
  }
  io::write_text(path, text);
}

}  // namespace

json MetricReport::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"schema", "otoscad.metrics"},
          {"version", 1},
          {"method", method},
          {"seed", seed},
          {"config_hash", config_hash},
          {"split", "test"},
          {"videos", videos},
          {"undetermined", undetermined},
          {"auroc", auroc},
          {"auprc", auprc},
          {"threshold", std::isinf(threshold) ? json("inf") : json(threshold)},
          {"validation_sensitivity", validation_sensitivity},
          {"accuracy", confusion.accuracy},
          {"sensitivity", opt(confusion.sensitivity)},
          {"specificity", opt(confusion.specificity)},
          {"precision", opt(confusion.precision)},
          {"counts",
           {{"tp", confusion.counts.tp},
            {"fp", confusion.counts.fp},
            {"tn", confusion.counts.tn},
            {"fn", confusion.counts.fn}}}};
}

void cmd_synth(const config::RunConfig& config) {
  const RunPaths paths{config.out};
  synth::SynthConfig s = config.synth;
  s.seed = config.seed;
  synth::generate_dataset(s, paths.dataset());
  io::write_json(paths.dataset() / "provenance.json", provenance_json(config));
}

void cmd_detect_train(const config::RunConfig& config) {
  const RunPaths paths{config.out};
  const Dataset d = open_dataset(paths);
  detect::DetectorModel model(config.detector.model);
  model.init(config.seed);
  const auto result =
      detect::train_detector(d.manifest, d.sources, model, config.detector.train, config.seed);
  json meta = provenance_json(config);
  meta["epochs"] = result.epochs_run;
  meta["final_loss"] = result.loss_curve.empty() ? 0.0 : result.loss_curve.back();
  detect::save_detector(model, meta, paths.detector());
  std::string log = "# " + provenance(config) + "\nepoch,loss\n";
  char buf[64];
  for (std::size_t e = 0; e < result.loss_curve.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", e, result.loss_curve[e]);
    log += buf;
  }
  io::write_text(paths.detector_dir() / "train_log.csv", log);
}

std::vector<detect::AccuracyRow> cmd_detect_eval(const config::RunConfig& config) {
  const RunPaths paths{config.out};
  const Dataset d = open_dataset(paths);
  const detect::DetectorModel model = open_detector(paths);
  std::vector<Image> frames;
  std::vector<FrameAnnotation> truth;
  std::vector<Label> labels;
  for (const VideoRecord* record : d.manifest.in_split(Split::kTest)) {
    auto source = d.sources(*record);
    for (const auto& a : record->annotations) {
      frames.push_back(source->frame(a.frame_index));
      truth.push_back(a);
      labels.push_back(record->label);
    }
  }
  const auto detections = detect::run_detector(model, frames);
  auto rows =
      detect::eval_detection_accuracy(detections, truth, labels, config.detector.iou_thresholds);
  detect::write_accuracy_csv(rows, paths.detector_dir() / "accuracy.csv", provenance(config));
  return rows;
}

void cmd_scad_train(const config::RunConfig& config, const std::string& method) {
  const RunPaths paths{config.out};
  const Dataset d = open_dataset(paths);
  train_method(config, paths, method, train_patches(config, d));
}

void cmd_score(const config::RunConfig& config, const std::string& method) {
  const RunPaths paths{config.out};
  const Dataset d = open_dataset(paths);
  const detect::DetectorModel detector = open_detector(paths);
  require_artifact(paths.scad_model(method, config.seed), "scad-train");
  const auto loaded = scad::load_embedding(paths.scad_model(method, config.seed));
  const auto run = score_method(config, loaded.model, train_patches(config, d),
                                detect_eval_splits(config, d, detector));
  const fs::path dir = paths.report_dir(method, config.seed);
  score::save_report(run.val, dir / "val");
  score::save_report(run.test, dir / "test");
}

MetricReport cmd_eval(const config::RunConfig& config, const std::string& method) {
  const RunPaths paths{config.out};
  const fs::path dir = paths.report_dir(method, config.seed);
  require_artifact(dir / "test" / "report.json", "score");
  require_artifact(dir / "val" / "report.json", "score");
  const ScoredRun run{score::load_report(dir / "val"), score::load_report(dir / "test")};
  const MetricReport m = evaluate(config, method, run);
  save_run(config, paths, method, run, m);
  return m;
}

config::RunConfig null_config(const config::RunConfig& config) {
  config::RunConfig n = config;
  n.out = (fs::path(config.out) / "null").string();
  n.synth.anomaly_magnitude = 0.0;
  n.synth.counts.at(Split::kTest, Label::kNormal) = config.matrix.null_test_videos;
  n.synth.counts.at(Split::kTest, Label::kAbnormal) = config.matrix.null_test_videos;
  return n;
}

std::vector<TableRow> summarize(const std::vector<MetricReport>& runs) {
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> values;
  for (const auto& r : runs) {
    if (!values.contains(r.method)) order.push_back(r.method);
    values[r.method].first.push_back(r.auroc);
    values[r.method].second.push_back(r.auprc);
  }
  std::vector<TableRow> rows;
  for (const auto& method : order) {
    rows.push_back({method, metrics::mean_std(values[method].first),
                    metrics::mean_std(values[method].second)});
  }
  return rows;
}

void write_table(const std::vector<TableRow>& rows, const fs::path& path,
                 const std::string& provenance_line) {
  std::string text = "# " + provenance_line +
                     "\nmethod,runs,auroc_mean,auroc_std,auprc_mean,auprc_std,auroc_pct,auprc_pct\n";
  char buf[256];
  for (const auto& r : rows) {
    auto pct = [](metrics::MeanStd v) {
      v.mean *= 100.0;
      v.std *= 100.0;
      return metrics::format_mean_std(v);
    };
    std::snprintf(buf, sizeof buf, "%s,%d,%.6f,%.6f,%.6f,%.6f,", r.method.c_str(), r.auroc.runs,
                  r.auroc.mean, r.auroc.std, r.auprc.mean, r.auprc.std);
    text += buf + pct(r.auroc) + "," + pct(r.auprc) + "\n";
  }
  io::write_text(path, text);
}

MatrixResult cmd_matrix(const config::RunConfig& base,
                        const std::function<void(const std::string&)>& log) {
  auto note = [&](const std::string& line) {
    spdlog::info("{}", line);
    if (log) log(line);
  };
  const RunPaths paths{base.out};
  config::save(base, paths.config());
  MatrixResult result;

  cmd_synth(base);
  note("dataset written to " + paths.dataset().string());
  cmd_detect_train(base);
  result.detection = cmd_detect_eval(base);
  for (const auto& row : result.detection) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "detector %s IoU>%.2f accuracy %.4f", row.label.c_str(),
                  row.iou_threshold, row.accuracy);
    note(buf);
  }

  const Dataset d = open_dataset(paths);
  const detect::DetectorModel detector = open_detector(paths);
  const auto patches = train_patches(base, d);
  const Detected detected = detect_eval_splits(base, d, detector);
  const std::string provenance_line = "config_hash=" + config::config_hash(base);

  // Method name -> run directory name, so identical setups train once.
  std::vector<std::string> ablation_names;
  for (auto objective : config::kAblationObjectives) {
    ablation_names.push_back("ablation-" + std::string(objective));
  }
  auto same_setup = [&](const std::string& a, const std::string& b) {
    const auto x = resolve_method(base, a), y = resolve_method(base, b);
    return x.objective == y.objective && x.shift == y.shift;
  };

  auto run_one = [&](const std::string& method, std::uint64_t seed,
                     const std::string& alias) -> MetricReport {
    config::RunConfig c = base;
    c.seed = seed;
    if (alias.empty()) train_method(c, paths, method, patches);
    const std::string source = alias.empty() ? method : alias;
    const auto loaded = scad::load_embedding(paths.scad_model(source, seed));
    const ScoredRun run = score_method(c, loaded.model, patches, detected);
    MetricReport m = evaluate(c, method, run);
    save_run(c, paths, method, run, m);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s seed %llu AUROC %.4f AUPRC %.4f", method.c_str(),
                  static_cast<unsigned long long>(seed), m.auroc, m.auprc);
    note(buf);
    return m;
  };

  for (const auto& method : base.matrix.methods) {
    for (std::uint64_t seed : base.matrix.seeds) result.runs.push_back(run_one(method, seed, ""));
    write_runs_csv(result.runs, paths.matrix_dir() / "runs.csv", provenance_line);
  }
  write_table(summarize(result.runs), paths.matrix_dir() / "table2.csv", provenance_line);
  write_confusion_table(result.runs, paths.matrix_dir() / "table5.csv", provenance_line);

  if (base.matrix.ablation) {
    for (const auto& name : ablation_names) {
      std::string alias;
      for (const auto& method : base.matrix.methods) {
        if (same_setup(name, method)) alias = method;
      }
      for (std::uint64_t seed : base.matrix.seeds) {
        result.ablation.push_back(run_one(name, seed, alias));
      }
      write_runs_csv(result.ablation, paths.matrix_dir() / "ablation_runs.csv", provenance_line);
    }
    write_table(summarize(result.ablation), paths.matrix_dir() / "table4.csv", provenance_line);
  }

  if (base.matrix.null_set) {
    const config::RunConfig null_base = null_config(base);
    const RunPaths null_paths{null_base.out};
    cmd_synth(null_base);
    const Dataset nd = open_dataset(null_paths);
    // The companion set shares the training videos, so trained models and
    // reference patches carry over.
    require(scad::patch_set_hash(train_patches(null_base, nd)) == scad::patch_set_hash(patches),
            ErrorCategory::kData, "null set training videos differ from the main set");
    const Detected null_detected = detect_eval_splits(null_base, nd, detector);
    for (const auto& method : base.matrix.methods) {
      for (std::uint64_t seed : base.matrix.seeds) {
        config::RunConfig c = null_base;
        c.seed = seed;
        const auto loaded = scad::load_embedding(paths.scad_model(method, seed));
        const ScoredRun run = score_method(c, loaded.model, patches, null_detected);
        MetricReport m = evaluate(c, method, run);
        save_run(c, null_paths, method, run, m);
        char buf[160];
        std::snprintf(buf, sizeof buf, "null set %s seed %llu AUROC %.4f", method.c_str(),
                      static_cast<unsigned long long>(seed), m.auroc);
        note(buf);
        result.null_runs.push_back(m);
      }
    }
    write_runs_csv(result.null_runs, paths.matrix_dir() / "null_runs.csv", provenance_line);
    write_table(summarize(result.null_runs), paths.matrix_dir() / "null.csv", provenance_line);
  }
  return result;
}

}  // namespace otoscad::pipeline
