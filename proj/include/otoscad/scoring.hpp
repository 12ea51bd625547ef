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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "otoscad/dataset.hpp"
#include "otoscad/detector.hpp"
#include "otoscad/scad_train.hpp"
#include "otoscad/types.hpp"

namespace otoscad::score {

/// Exact k-nearest-neighbour index over unit-norm reference embeddings.
class ReferenceIndex {
 public:
  /// Throws if k < 1, k > rows, or any row is not unit-norm (1e-4).
  ReferenceIndex(const Eigen::MatrixXd& references, int k);

  int k() const { return k_; }
  int size() const { return rows_; }
  int dim() const { return dim_; }
  std::span<const double> reference(int i) const {
    return {data_.data() + static_cast<std::size_t>(i) * dim_, static_cast<std::size_t>(dim_)};
  }

  /// Sum over the k most similar references y of (1 - e . y).
  double frame_score(std::span<const double> e) const;
  double frame_score(const Eigen::VectorXd& e) const {
    return frame_score(std::span<const double>(e.data(), static_cast<std::size_t>(e.size())));
  }

 private:
  int k_, rows_, dim_;
  std::vector<double> data_;  // row-major
};

/// Mean of the frame scores; nullopt when no frame was scored.
std::optional<double> video_score(std::span<const double> frame_scores);

/// Largest threshold psi such that the fraction of abnormal validation scores
/// strictly above psi is >= target. Candidates are +inf, midpoints between
/// consecutive distinct scores, and a value just below the minimum score.
double select_threshold(std::span<const LabeledScore> validation, double target_sensitivity);

/// How a video without any detected eardrum frame enters the metrics.
enum class UndeterminedPolicy { kAbnormal, kNormal, kExclude };
std::string_view to_string(UndeterminedPolicy policy);
UndeterminedPolicy parse_undetermined_policy(std::string_view text);

/// Patches cut from detector boxes, grouped per video.
struct DetectedVideo {
  std::string video_id;
  Label label = Label::kNormal;
  int frame_count = 0;
  std::vector<Patch> patches;  // detected frames only
};

std::vector<DetectedVideo> detect_patches(const detect::DetectorModel& detector,
                                          const std::vector<const VideoRecord*>& records,
                                          const data::FrameSourceFactory& sources, int patch_size);

struct FrameScore {
  std::string video_id;
  int frame_index = 0;
  double score = 0.0;
  bool operator==(const FrameScore&) const = default;
};

struct VideoResult {
  std::string video_id;
  Label label = Label::kNormal;
  int detected_frames = 0;
  std::optional<double> score;  // nullopt: undetermined
  std::optional<bool> flagged;  // nullopt: excluded by policy
  bool operator==(const VideoResult&) const = default;
};

struct AnomalyReport {
  double threshold = 0.0;  // may be +inf
  UndeterminedPolicy policy = UndeterminedPolicy::kAbnormal;
  std::vector<VideoResult> videos;
  std::vector<FrameScore> frames;
  std::string config_hash;
  std::uint64_t seed = 0;
  bool operator==(const AnomalyReport&) const = default;

  std::vector<const VideoResult*> undetermined() const;
};

/// Frame and video scores for the given detected videos; decisions unset.
AnomalyReport score_detected(const scad::EmbeddingModel& model, const ReferenceIndex& index,
                             const std::vector<DetectedVideo>& videos);

/// Sets every decision: score > psi, or the policy for undetermined videos.
void apply_threshold(AnomalyReport& report, double threshold, UndeterminedPolicy policy);

/// Video scores entering rank metrics: undetermined videos become +inf
/// (abnormal policy), -inf (normal policy) or are dropped (exclude).
std::vector<LabeledScore> labeled_video_scores(const AnomalyReport& report);
std::vector<LabeledScore> labeled_video_scores(const AnomalyReport& report,
                                               UndeterminedPolicy policy);

/// report.json plus a sidecar frame_scores.csv in `dir`.
void save_report(const AnomalyReport& report, const std::filesystem::path& dir);
AnomalyReport load_report(const std::filesystem::path& dir);

/// Index over the embeddings of every groundtruth training patch.
ReferenceIndex build_index(const scad::EmbeddingModel& model,
                           const std::vector<data::VideoPatches>& train_patches, int k);

/// One row per detected frame: video_id, frame_index, label, then the vector.
void export_embeddings(const scad::EmbeddingModel& model, const std::vector<DetectedVideo>& videos,
                       const std::filesystem::path& path, std::string_view provenance = {});

}  // namespace otoscad::score
