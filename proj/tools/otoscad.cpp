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

#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "otoscad/config.hpp"
#include "otoscad/error.hpp"
#include "otoscad/pipeline.hpp"

namespace {

using namespace otoscad;

struct Options {
  std::string config_path;
  std::string preset = "desk";
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string variant = "cj-wf";
  bool quiet = false;
};

config::RunConfig resolve(const Options& o) {
  config::RunConfig c = o.config_path.empty() ? config::preset(o.preset) : config::load(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.out = o.out;
  c.validate();
  return c;
}

void print_metrics(const pipeline::MetricReport& m) {
  auto opt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("n/a"); };
  std::printf("method %s seed %llu\n", m.method.c_str(), static_cast<unsigned long long>(m.seed));
  std::printf("  AUROC %.4f  AUPRC %.4f\n", m.auroc, m.auprc);
  std::printf("  accuracy %.4f  sensitivity %s  specificity %s  precision %s\n",
              m.confusion.accuracy, opt(m.confusion.sensitivity).c_str(),
              opt(m.confusion.specificity).c_str(), opt(m.confusion.precision).c_str());
  if (m.undetermined > 0) std::printf("  undetermined videos: %d\n", m.undetermined);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eardrum anomaly detection pipeline on otoscopy videos"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config_path, "Run configuration (JSON)");
  app.add_option("--preset", o.preset, "Preset used without --config: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--seed", o.seed, "Override the master seed");
  app.add_option("--out", o.out, "Override the output directory");
  app.add_flag("--quiet", o.quiet, "Only print errors");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic dataset");
  auto* detect_train = app.add_subcommand("detect-train", "Train the eardrum detector");
  auto* detect_eval = app.add_subcommand("detect-eval", "Detection accuracy table on test frames");
  auto* scad_train = app.add_subcommand("scad-train", "Train the anomaly embedding");
  auto* score = app.add_subcommand("score", "Score validation and test videos");
  auto* eval = app.add_subcommand("eval", "Metric report from the scored test videos");
  auto* matrix = app.add_subcommand("matrix", "Full experiment matrix and summary tables");
  auto* init = app.add_subcommand("init-config", "Write the resolved configuration");
  std::string init_path = "config.json";
  init->add_option("path", init_path, "Destination file");
  for (auto* sub : {scad_train, score, eval}) {
    sub->add_option("--variant", o.variant,
                    "msc, cj-rc, cj-rr, cj-wf, or ablation-<objective>");
  }

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(o.quiet ? spdlog::level::err : spdlog::level::info);

  try {
    const config::RunConfig c = resolve(o);
    if (synth->parsed()) {
      pipeline::cmd_synth(c);
      spdlog::info("dataset written to {}/dataset", c.out);
    } else if (detect_train->parsed()) {
      pipeline::cmd_detect_train(c);
      spdlog::info("detector written to {}/detector", c.out);
    } else if (detect_eval->parsed()) {
      for (const auto& row : pipeline::cmd_detect_eval(c)) {
        std::printf("%-8s IoU>%.2f  %.4f  (%d frames)\n", row.label.c_str(), row.iou_threshold,
                    row.accuracy, row.frames);
      }
    } else if (scad_train->parsed()) {
      pipeline::cmd_scad_train(c, o.variant);
      spdlog::info("embedding written to {}", pipeline::RunPaths{c.out}.scad_dir(o.variant, c.seed).string());
    } else if (score->parsed()) {
      pipeline::cmd_score(c, o.variant);
      spdlog::info("reports written to {}", pipeline::RunPaths{c.out}.report_dir(o.variant, c.seed).string());
    } else if (eval->parsed()) {
      print_metrics(pipeline::cmd_eval(c, o.variant));
    } else if (matrix->parsed()) {
      const auto result = pipeline::cmd_matrix(c);
      for (const auto& row : pipeline::summarize(result.runs)) {
        std::printf("%-28s AUROC %.4f ± %.4f  AUPRC %.4f ± %.4f\n", row.method.c_str(),
                    row.auroc.mean, row.auroc.std, row.auprc.mean, row.auprc.std);
      }
      for (const auto& row : pipeline::summarize(result.ablation)) {
        std::printf("%-28s AUROC %.4f ± %.4f\n", row.method.c_str(), row.auroc.mean, row.auroc.std);
      }
    } else if (init->parsed()) {
      config::save(c, init_path);
      spdlog::info("configuration written to {}", init_path);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error[%s]: %s\n", std::string(category_name(e.category())).c_str(),
                 e.what());
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error[internal]: %s\n", e.what());
    return 1;
  }
  return 0;
}
