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

// Run configuration: every tunable of every stage in one JSON document.
// Loading is strict: unknown keys and invalid values are errors, missing
// keys keep their defaults.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "otoscad/detector.hpp"
#include "otoscad/scad_train.hpp"
#include "otoscad/scoring.hpp"
#include "otoscad/shift.hpp"
#include "otoscad/synth.hpp"

namespace otoscad::config {

/// Where the embedding backbone starts from.
enum class EmbeddingInit {
  kScratch,   // seeded random initialization
  kDetector,  // backbone copied from the trained detector
};
std::string_view to_string(EmbeddingInit init);
EmbeddingInit parse_embedding_init(std::string_view text);

struct DetectorSection {
  detect::DetectorConfig model;
  detect::DetectorTrainParams train;
  std::vector<double> iou_thresholds{0.5, 0.75, 0.9};
};

struct ScadSection {
  scad::EmbeddingConfig model;
  EmbeddingInit init = EmbeddingInit::kScratch;
  /// Side of the square eardrum patches cut from frames.
  int patch_size = 224;
  scad::ScadTrainParams train;
  /// Jitter strengths and region parameters shared by every shift kind.
  shift::ShiftVariant shift;
};

struct ScoringSection {
  int k = 2;
  double target_sensitivity = 0.9;
  score::UndeterminedPolicy undetermined = score::UndeterminedPolicy::kAbnormal;
};

struct MatrixSection {
  std::vector<std::string> methods{"msc", "cj-rc", "cj-rr", "cj-wf"};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  bool ablation = true;
  /// Shift used by the ablation objectives that consume shifted samples.
  std::string ablation_shift = "cj-wf";
  /// Magnitude-0 companion set scored with the trained models.
  bool null_set = true;
  /// Test videos per label in the companion set.
  int null_test_videos = 10;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "run";
  synth::SynthConfig synth;
  DetectorSection detector;
  ScadSection scad;
  ScoringSection scoring;
  MatrixSection matrix;

  /// Throws kConfig naming the first offending field.
  void validate() const;
};

/// Documented defaults: values stated for the clinical setup where known.
RunConfig paper_defaults();
/// Desk-scale preset sized for a single CPU core.
RunConfig desk_preset();
RunConfig preset(std::string_view name);

nlohmann::json to_json(const RunConfig& config);
/// Strict: rejects unknown keys and wrongly typed values, then validates.
RunConfig from_json(const nlohmann::json& j);

RunConfig load(const std::filesystem::path& path);
void save(const RunConfig& config, const std::filesystem::path& path);

/// Hash of the canonical serialization with the output directory removed.
std::string config_hash(const RunConfig& config);

/// Method names of the comparison table and their training setup.
struct MethodSpec {
  std::string name;
  scad::Objective objective = scad::Objective::kMscShiftAngular;
  std::optional<shift::ShiftKind> shift;
};
/// "msc" (objective msc+angular, no shift) or a shift kind name.
MethodSpec method_spec(std::string_view method);
/// Ablation entry for an objective name, using the configured ablation shift.
MethodSpec ablation_spec(std::string_view objective, const RunConfig& config);
/// Ablation objectives in table order.
inline constexpr std::string_view kAblationObjectives[] = {"msc", "angular", "shift_angular",
                                                           "msc+shift_angular"};

/// Training parameters and shift variant of a method under this config.
scad::ScadTrainParams train_params(const RunConfig& config, const MethodSpec& method);
std::optional<shift::ShiftVariant> shift_variant(const RunConfig& config, const MethodSpec& method);

}  // namespace otoscad::config
